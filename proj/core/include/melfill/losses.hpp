#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "melfill/masking.hpp"
#include "melfill/nn/autograd.hpp"

namespace melfill {

/// Frozen convolutional feature network used for perceptual losses and the
/// feature metric. Input images are single-channel in [-1, 1]; they are
/// replicated to three channels and mapped to ImageNet input statistics.
class FeatureExtractor {
 public:
  struct Layer {
    int out_channels;
    bool pool_before;  // 2x2 max pool ahead of this conv
  };

  /// 3x3 conv stack with the VGG19 layout up to the 12th conv; weights from a
  /// tensor archive holding conv<b>_<i>.weight / .bias entries.
  static FeatureExtractor vgg19(const std::filesystem::path& weights);

  /// Same interface and layout as vgg19(), channel widths divided by
  /// `width_divisor`, weights drawn from a fixed seed. Used where pretrained
  /// weights are unavailable (tests, CI).
  static FeatureExtractor test_double(std::uint64_t seed = 19, int width_divisor = 16);

  /// Two conv layers (stride 1 and 2 taps) for finite-difference checks.
  static FeatureExtractor toy(std::uint64_t seed = 7);

  FeatureExtractor(std::vector<Layer> layers, std::vector<int> taps,
                   std::vector<nn::Tensor> weights, std::vector<nn::Tensor> biases,
                   std::string name);

  /// Activations at the tap layers, in tap order.
  std::vector<nn::Var> features(const nn::Var& image) const;

  /// Cumulative spatial stride of each tap relative to the input.
  const std::vector<int>& tap_strides() const { return tap_strides_; }
  const std::vector<int>& taps() const { return taps_; }
  const std::string& name() const { return name_; }

  /// Same extractor with the tap order permuted.
  FeatureExtractor with_taps(std::vector<int> taps) const;

 private:
  std::vector<Layer> layers_;
  std::vector<int> taps_;  // 1-based conv indices
  std::vector<int> tap_strides_;
  std::vector<nn::Var> weights_;
  std::vector<nn::Var> biases_;
  std::string name_;
};

enum class RecMode { kL1, kVggFeature };
std::string_view to_string(RecMode mode);
RecMode parse_rec_mode(std::string_view name);

struct LossWeights {
  float lambda_adv = 1.0f;
  float lambda_rec = 100.0f;
  float lambda_chunk = 100.0f;
  float lambda_l1_residual = 0.0f;  // extra L1 term in feature mode
  RecMode rec_mode = RecMode::kL1;

  void validate() const;
};

nn::Var l1_loss(const nn::Var& generated, const nn::Var& target);
/// Mean squared error between a score grid and a constant label.
nn::Var adversarial_loss_lsgan(const nn::Var& score_grid, float target_label);
nn::Var vgg_feature_loss(const FeatureExtractor& extractor, const nn::Var& generated,
                         const nn::Var& target);
nn::Var chunk_loss(const FeatureExtractor& extractor, const nn::Var& generated,
                   const nn::Var& target, const GapSpec& gap);

struct LossBreakdown {
  nn::Var total;
  float adv = 0.0f;
  float rec = 0.0f;
  float chunk = 0.0f;
  float l1_residual = 0.0f;
};

/// Weighted generator objective. `extractor` may be null in L1 mode.
LossBreakdown generator_objective(const LossWeights& weights,
                                  const nn::Var& score_grid_on_fake,
                                  const nn::Var& generated, const nn::Var& target,
                                  const GapSpec& gap, const FeatureExtractor* extractor);

/// 1/2 [MSE(real, 1) + MSE(fake, 0)].
nn::Var discriminator_objective(const nn::Var& grid_on_real, const nn::Var& grid_on_fake);

}  // namespace melfill
