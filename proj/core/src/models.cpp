#include "melfill/models.hpp"

#include <algorithm>
#include <array>

#include "melfill/error.hpp"

namespace melfill {

namespace {

constexpr int kUnetLevels = 5;
constexpr std::array<int, kUnetLevels> kEncoderWidth{1, 2, 4, 8, 8};
constexpr float kLeakySlope = 0.2f;

nn::ConvGeometry down_geometry(LevelStride s) {
  return nn::ConvGeometry{s.h, s.w, 1, 1};
}

class UNetGenerator final : public Generator {
 public:
  UNetGenerator(const GeneratorConfig& config, std::uint64_t seed)
      : Generator(config), strides_(unet_stride_plan(config)) {
    std::mt19937_64 rng(seed);
    const int b = config.base_channels;
    int in_ch = 1;
    for (int i = 0; i < kUnetLevels; ++i) {
      const int out_ch = b * kEncoderWidth[i];
      const std::string name = "enc" + std::to_string(i + 1);
      // Layers followed by batch norm carry no bias.
      enc_.emplace_back(params_, name, in_ch, out_ch, 4, 4, down_geometry(strides_[i]),
                        i == 0, rng);
      enc_norm_.push_back(i == 0 ? nullptr
                                 : std::make_unique<nn::BatchNorm2d>(params_, name + ".bn",
                                                                     out_ch, rng));
      in_ch = out_ch;
    }
    // Decoder level i mirrors encoder level i; level 5 is innermost.
    dec_.resize(kUnetLevels);
    dec_norm_.resize(kUnetLevels);
    for (int i = kUnetLevels - 1; i >= 0; --i) {
      const bool innermost = i == kUnetLevels - 1;
      const int dec_in = innermost ? b * kEncoderWidth[i] : 2 * b * kEncoderWidth[i];
      const int dec_out = i == 0 ? 1 : b * kEncoderWidth[i - 1];
      const std::string name = "dec" + std::to_string(i + 1);
      dec_[i] = nn::ConvTranspose2d(params_, name, dec_in, dec_out, 4, 4,
                                    down_geometry(strides_[i]), i == 0, rng);
      if (i > 0) dec_norm_[i] = std::make_unique<nn::BatchNorm2d>(params_, name + ".bn", dec_out, rng);
    }
  }

  nn::Var forward(const nn::Var& x, bool training, std::mt19937_64* rng) override {
    std::vector<nn::Var> skips;
    nn::Var h = x;
    for (int i = 0; i < kUnetLevels; ++i) {
      h = enc_[i](h);
      if (enc_norm_[i]) h = (*enc_norm_[i])(h, training, true);
      h = nn::leaky_relu(h, kLeakySlope);
      skips.push_back(h);
    }
    for (int i = kUnetLevels - 1; i >= 0; --i) {
      if (i < kUnetLevels - 1) h = nn::concat_channels(h, skips[i]);
      h = dec_[i](h);
      if (i == 0) break;
      h = (*dec_norm_[i])(h, training, true);
      // Dropout on the two innermost decoder levels.
      if (training && rng && i >= kUnetLevels - 2 && config_.dropout > 0.0f) {
        h = nn::dropout(h, config_.dropout, *rng);
      }
      h = nn::relu(h);
    }
    return nn::tanh(h);
  }

 private:
  std::vector<LevelStride> strides_;
  std::vector<nn::Conv2d> enc_;
  std::vector<std::unique_ptr<nn::BatchNorm2d>> enc_norm_;
  std::vector<nn::ConvTranspose2d> dec_;
  std::vector<std::unique_ptr<nn::BatchNorm2d>> dec_norm_;
};

// Three parallel encoder-decoder columns with different receptive fields,
// fused by a 1x1 convolution.
class MultiColumnGenerator final : public Generator {
 public:
  static constexpr std::array<int, 3> kKernels{3, 5, 7};

  MultiColumnGenerator(const GeneratorConfig& config, std::uint64_t seed)
      : Generator(config) {
    std::mt19937_64 rng(seed);
    const int c = config.base_channels;
    for (std::size_t col = 0; col < kKernels.size(); ++col) {
      const int k = kKernels[col];
      const int p = (k - 1) / 2;
      const std::string prefix = "col" + std::to_string(col + 1) + ".";
      Column column;
      const std::array<std::pair<int, int>, 4> down{{{1, c}, {c, 2 * c}, {2 * c, 4 * c}, {4 * c, 4 * c}}};
      const std::array<int, 4> strides{1, 2, 2, 1};
      for (int i = 0; i < 4; ++i) {
        const std::string name = prefix + "conv" + std::to_string(i + 1);
        column.convs.emplace_back(params_, name, down[i].first, down[i].second, k, k,
                                  nn::ConvGeometry{strides[i], strides[i], p, p}, false, rng);
        column.norms.push_back(std::make_unique<nn::BatchNorm2d>(params_, name + ".bn", down[i].second, rng));
      }
      const std::array<std::pair<int, int>, 2> up{{{4 * c, 2 * c}, {2 * c, c}}};
      for (int i = 0; i < 2; ++i) {
        const std::string name = prefix + "up" + std::to_string(i + 1);
        column.ups.emplace_back(params_, name, up[i].first, up[i].second, 4, 4,
                                nn::ConvGeometry{2, 2, 1, 1}, false, rng);
        column.up_norms.push_back(std::make_unique<nn::BatchNorm2d>(params_, name + ".bn", up[i].second, rng));
      }
      columns_.push_back(std::move(column));
    }
    fuse_ = nn::Conv2d(params_, "fuse", 3 * c, 1, 1, 1, nn::ConvGeometry{}, true, rng);
  }

  nn::Var forward(const nn::Var& x, bool training, std::mt19937_64*) override {
    std::vector<nn::Var> outputs;
    for (auto& column : columns_) {
      nn::Var h = x;
      for (std::size_t i = 0; i < column.convs.size(); ++i) {
        h = nn::leaky_relu((*column.norms[i])(column.convs[i](h), training, true), kLeakySlope);
      }
      for (std::size_t i = 0; i < column.ups.size(); ++i) {
        h = nn::leaky_relu((*column.up_norms[i])(column.ups[i](h), training, true), kLeakySlope);
      }
      outputs.push_back(h);
    }
    return nn::tanh(fuse_(nn::concat_channels(outputs)));
  }

 private:
  struct Column {
    std::vector<nn::Conv2d> convs;
    std::vector<std::unique_ptr<nn::BatchNorm2d>> norms;
    std::vector<nn::ConvTranspose2d> ups;
    std::vector<std::unique_ptr<nn::BatchNorm2d>> up_norms;
  };
  std::vector<Column> columns_;
  nn::Conv2d fuse_;
};

// Conv arithmetic for kernel 4, padding 1.
int conv_out(int d, int stride) { return (d + 2 - 4) / stride + 1; }

}  // namespace

std::string_view to_string(GeneratorVariant v) {
  switch (v) {
    case GeneratorVariant::kUnet256x128: return "unet_256x128";
    case GeneratorVariant::kUnet256x80: return "unet_256x80";
    case GeneratorVariant::kUnet128x128: return "unet_128x128";
    case GeneratorVariant::kGmcnn256x128: return "gmcnn_256x128";
  }
  return "unknown";
}

GeneratorVariant parse_generator_variant(std::string_view name) {
  for (auto v : {GeneratorVariant::kUnet256x128, GeneratorVariant::kUnet256x80,
                 GeneratorVariant::kUnet128x128, GeneratorVariant::kGmcnn256x128}) {
    if (to_string(v) == name) return v;
  }
  fail(ErrorCode::kInvalidArgument, "unknown generator variant '" + std::string(name) + "'");
}

GeneratorConfig GeneratorConfig::for_variant(GeneratorVariant variant, int base_channels) {
  GeneratorConfig c;
  c.variant = variant;
  c.base_channels = base_channels;
  switch (variant) {
    case GeneratorVariant::kUnet256x128:
    case GeneratorVariant::kGmcnn256x128:
      c.input_frames = 256;
      c.input_height = 128;
      break;
    case GeneratorVariant::kUnet256x80:
      c.input_frames = 256;
      c.input_height = 80;
      break;
    case GeneratorVariant::kUnet128x128:
      c.input_frames = 128;
      c.input_height = 128;
      break;
  }
  return c;
}

std::string GeneratorConfig::describe() const {
  return std::string(to_string(variant)) + " (frames=" + std::to_string(input_frames) +
         ", height=" + std::to_string(input_height) +
         ", base_channels=" + std::to_string(base_channels) +
         ", dropout=" + std::to_string(dropout) + ")";
}

std::string DiscriminatorConfig::describe() const {
  return "patchgan (in_channels=" + std::to_string(in_channels) +
         ", height=" + std::to_string(input_height) +
         ", frames=" + std::to_string(input_frames) +
         ", base_channels=" + std::to_string(base_channels) + ")";
}

std::vector<LevelStride> unet_stride_plan(const GeneratorConfig& config) {
  std::vector<LevelStride> plan(kUnetLevels, LevelStride{2, 2});
  // Height 80 halves to 5 after four levels; the innermost level keeps
  // stride 1 along the channel axis (5 -> 4 -> 5) so the decoder can return.
  if (config.variant == GeneratorVariant::kUnet256x80) plan.back().h = 1;

  int h = config.input_height, w = config.input_frames;
  for (const auto& s : plan) {
    const bool h_ok = s.h == 1 ? h >= 2 : (h >= 2 && h % 2 == 0);
    const bool w_ok = s.w == 1 ? w >= 2 : (w >= 2 && w % 2 == 0);
    if (!h_ok || !w_ok) {
      fail(ErrorCode::kConfigMismatch,
           "generator " + config.describe() +
               ": dimensions not reachable by the stride plan");
    }
    h = conv_out(h, s.h);
    w = conv_out(w, s.w);
  }
  return plan;
}

void validate(const GeneratorConfig& config) {
  require(config.base_channels >= 8, ErrorCode::kConfigMismatch,
          "generator " + config.describe() + ": base_channels must be >= 8");
  require(config.dropout >= 0.0f && config.dropout < 1.0f, ErrorCode::kConfigMismatch,
          "generator " + config.describe() + ": dropout outside [0, 1)");
  const auto expected = GeneratorConfig::for_variant(config.variant, config.base_channels);
  require(expected.input_frames == config.input_frames &&
              expected.input_height == config.input_height,
          ErrorCode::kConfigMismatch,
          "generator " + config.describe() + ": variant expects frames=" +
              std::to_string(expected.input_frames) +
              ", height=" + std::to_string(expected.input_height));
  if (config.variant == GeneratorVariant::kGmcnn256x128) {
    require(config.input_height % 4 == 0 && config.input_frames % 4 == 0,
            ErrorCode::kConfigMismatch,
            "generator " + config.describe() + ": dimensions must be multiples of 4");
  } else {
    unet_stride_plan(config);
  }
}

std::unique_ptr<Generator> build_generator(const GeneratorConfig& config, std::uint64_t seed) {
  validate(config);
  if (config.variant == GeneratorVariant::kGmcnn256x128) {
    return std::make_unique<MultiColumnGenerator>(config, seed);
  }
  return std::make_unique<UNetGenerator>(config, seed);
}

GridDims patch_grid_dims(int height, int width) {
  GridDims d{height, width};
  for (int i = 0; i < 3; ++i) {
    d.height = conv_out(d.height, 2);
    d.width = conv_out(d.width, 2);
  }
  for (int i = 0; i < 2; ++i) {
    d.height = conv_out(d.height, 1);
    d.width = conv_out(d.width, 1);
  }
  return d;
}

Discriminator::Discriminator(const DiscriminatorConfig& config, std::uint64_t seed)
    : config_(config) {
  const GridDims grid = patch_grid_dims(config.input_height, config.input_frames);
  require(grid.height >= 1 && grid.width >= 1 && config.in_channels >= 1 &&
              config.base_channels >= 1,
          ErrorCode::kConfigMismatch,
          "discriminator " + config.describe() + ": input below receptive minimum");
  std::mt19937_64 rng(seed);
  const int b = config.base_channels;
  const std::array<int, 5> widths{b, 2 * b, 4 * b, 8 * b, 1};
  const std::array<int, 5> strides{2, 2, 2, 1, 1};
  int in_ch = config.in_channels;
  for (int i = 0; i < 5; ++i) {
    const bool normed = i >= 1 && i <= 3;
    const std::string name = "conv" + std::to_string(i + 1);
    convs_.emplace_back(params_, name, in_ch, widths[i], 4, 4,
                        nn::ConvGeometry{strides[i], strides[i], 1, 1}, !normed, rng);
    norms_.push_back(normed ? std::make_unique<nn::BatchNorm2d>(params_, name + ".bn", widths[i], rng)
                            : nullptr);
    in_ch = widths[i];
  }
}

nn::Var Discriminator::forward(const nn::Var& x, bool training) {
  require(x.shape().c == config_.in_channels && x.shape().h == config_.input_height &&
              x.shape().w == config_.input_frames,
          ErrorCode::kShapeMismatch,
          "discriminator: input " + x.shape().str() + " vs " + config_.describe());
  nn::Var h = x;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    h = convs_[i](h);
    if (i + 1 == convs_.size()) break;
    if (norms_[i]) h = (*norms_[i])(h, training, false);
    h = nn::leaky_relu(h, kLeakySlope);
  }
  return nn::sigmoid(h);
}

std::unique_ptr<Discriminator> build_discriminator(const DiscriminatorConfig& config,
                                                   std::uint64_t seed) {
  return std::make_unique<Discriminator>(config, seed);
}

nn::Tensor to_image(const MelSpectrogram& mel, int height, float fill) {
  require(mel.state == MelState::kNormalized, ErrorCode::kStateMismatch,
          "to_image: expected normalized spectrogram");
  require(height >= mel.n_mels, ErrorCode::kShapeMismatch,
          "to_image: height " + std::to_string(height) + " < " +
              std::to_string(mel.n_mels) + " mel channels");
  nn::Tensor img(nn::Shape{1, 1, height, mel.frames}, fill);
  std::copy(mel.values.begin(), mel.values.end(), img.data());
  return img;
}

MelSpectrogram from_image(const nn::Tensor& image, int n_mels) {
  const auto& s = image.shape();
  require(s.n == 1 && s.c == 1 && s.h >= n_mels, ErrorCode::kShapeMismatch,
          "from_image: cannot take " + std::to_string(n_mels) + " rows from " + s.str());
  MelSpectrogram mel(n_mels, s.w, MelState::kNormalized);
  std::copy_n(image.data(), mel.values.size(), mel.values.begin());
  return mel;
}

nn::Tensor generate(Generator& model, const nn::Tensor& masked) {
  const auto& cfg = model.config();
  const auto& s = masked.shape();
  require(s.c == 1 && s.h == cfg.input_height && s.w == cfg.input_frames,
          ErrorCode::kShapeMismatch,
          "generate: input " + s.str() + " does not match " + cfg.describe());
  nn::NoGradGuard no_grad;
  return model.forward(nn::Var(masked), false, nullptr).value();
}

MelSpectrogram splice_gap(const MelSpectrogram& source, const MelSpectrogram& generated,
                          const GapSpec& gap) {
  require(source.n_mels == generated.n_mels && source.frames == generated.frames,
          ErrorCode::kShapeMismatch, "splice_gap: spectrogram size mismatch");
  require(gap.frame_end() <= source.frames && gap.frame_start >= 0,
          ErrorCode::kInvalidArgument, "splice_gap: gap outside spectrogram");
  MelSpectrogram out = source;
  for (int r = 0; r < out.n_mels; ++r)
    for (int t = gap.frame_start; t < gap.frame_end(); ++t) out.at(r, t) = generated.at(r, t);
  return out;
}

MelSpectrogram inpaint(Generator& model, const MelSpectrogram& masked, const GapSpec& gap) {
  const nn::Tensor image = to_image(masked, model.config().input_height);
  const MelSpectrogram generated = from_image(generate(model, image), masked.n_mels);
  return splice_gap(masked, generated, gap);
}

}  // namespace melfill
