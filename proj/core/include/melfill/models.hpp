#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "melfill/dsp.hpp"
#include "melfill/masking.hpp"
#include "melfill/nn/layers.hpp"

namespace melfill {

enum class GeneratorVariant {
  kUnet256x128,
  kUnet256x80,
  kUnet128x128,
  kGmcnn256x128,
};

std::string_view to_string(GeneratorVariant v);
GeneratorVariant parse_generator_variant(std::string_view name);

struct GeneratorConfig {
  GeneratorVariant variant = GeneratorVariant::kUnet256x128;
  int input_frames = 256;
  int input_height = 128;
  int base_channels = 64;
  float dropout = 0.5f;

  static GeneratorConfig for_variant(GeneratorVariant variant, int base_channels = 64);
  bool operator==(const GeneratorConfig&) const = default;
  std::string describe() const;
};

/// Per-level (height, width) strides of the U-Net encoder. Throws a config
/// error when the variant's plan cannot reach the configured dimensions.
struct LevelStride {
  int h;
  int w;
};
std::vector<LevelStride> unet_stride_plan(const GeneratorConfig& config);

void validate(const GeneratorConfig& config);

class Generator {
 public:
  virtual ~Generator() = default;

  /// x: [N, 1, input_height, input_frames] in [-1, 1]. Dropout only runs when
  /// training and an rng is supplied.
  virtual nn::Var forward(const nn::Var& x, bool training, std::mt19937_64* rng) = 0;

  const GeneratorConfig& config() const { return config_; }
  nn::ParameterSet& parameters() { return params_; }
  const nn::ParameterSet& parameters() const { return params_; }

 protected:
  explicit Generator(GeneratorConfig config) : config_(config) {}
  GeneratorConfig config_;
  nn::ParameterSet params_;
};

std::unique_ptr<Generator> build_generator(const GeneratorConfig& config,
                                           std::uint64_t seed);

struct DiscriminatorConfig {
  int in_channels = 2;  // masked source + candidate, stacked
  int input_height = 128;
  int input_frames = 256;
  int base_channels = 64;

  bool operator==(const DiscriminatorConfig&) const = default;
  std::string describe() const;
};

struct GridDims {
  int height;
  int width;
  bool operator==(const GridDims&) const = default;
};

/// Output grid of the patch discriminator for an input of the given size;
/// a dimension <= 0 means the input is below the receptive minimum.
GridDims patch_grid_dims(int height, int width);

class Discriminator {
 public:
  Discriminator(const DiscriminatorConfig& config, std::uint64_t seed);

  /// Sigmoid scores, [N, 1, grid_h, grid_w].
  nn::Var forward(const nn::Var& x, bool training);

  const DiscriminatorConfig& config() const { return config_; }
  nn::ParameterSet& parameters() { return params_; }
  const nn::ParameterSet& parameters() const { return params_; }

 private:
  DiscriminatorConfig config_;
  nn::ParameterSet params_;
  std::vector<nn::Conv2d> convs_;
  std::vector<std::unique_ptr<nn::BatchNorm2d>> norms_;  // layers 2..4
};

std::unique_ptr<Discriminator> build_discriminator(const DiscriminatorConfig& config,
                                                   std::uint64_t seed);

/// Normalised 80-row mel -> [1, 1, height, frames]; extra rows take `fill`.
nn::Tensor to_image(const MelSpectrogram& mel, int height, float fill = -1.0f);
/// Drops padding rows, returning an n_mels x frames normalised spectrogram.
MelSpectrogram from_image(const nn::Tensor& image, int n_mels);

/// Runs the generator in inference mode on a masked image.
nn::Tensor generate(Generator& model, const nn::Tensor& masked);

/// Keeps the source outside the gap columns and the generated content inside.
MelSpectrogram splice_gap(const MelSpectrogram& source,
                          const MelSpectrogram& generated, const GapSpec& gap);

/// Mask-free convenience: pads, generates, strips, and splices.
MelSpectrogram inpaint(Generator& model, const MelSpectrogram& masked,
                       const GapSpec& gap);

}  // namespace melfill
