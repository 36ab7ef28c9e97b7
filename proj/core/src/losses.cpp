#include "melfill/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "melfill/error.hpp"
#include "melfill/tensor_archive.hpp"

namespace melfill {

namespace {

constexpr std::array<float, 3> kImagenetMean{0.485f, 0.456f, 0.406f};
constexpr std::array<float, 3> kImagenetStd{0.229f, 0.224f, 0.225f};
const std::vector<int> kDefaultTaps{2, 4, 8, 12};

// VGG19 convolutions up to conv4_4, with the pools that precede blocks 2-4.
std::vector<FeatureExtractor::Layer> vgg19_layout(int divisor) {
  std::vector<FeatureExtractor::Layer> layers;
  const std::array<std::pair<int, int>, 4> blocks{{{64, 2}, {128, 2}, {256, 4}, {512, 4}}};
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (int i = 0; i < blocks[b].second; ++i) {
      layers.push_back({std::max(1, blocks[b].first / divisor), b > 0 && i == 0});
    }
  }
  return layers;
}

std::string vgg_layer_name(int index) {
  // index is 0-based over the 12 convs above.
  static constexpr std::array<int, 4> kBlockSizes{2, 2, 4, 4};
  int block = 0;
  while (index >= kBlockSizes[block]) index -= kBlockSizes[block++];
  return "conv" + std::to_string(block + 1) + "_" + std::to_string(index + 1);
}

// He-style init keeps activations from vanishing through 12 random layers.
std::pair<std::vector<nn::Tensor>, std::vector<nn::Tensor>> random_weights(
    const std::vector<FeatureExtractor::Layer>& layers, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<nn::Tensor> w, b;
  int in_ch = 3;
  for (const auto& layer : layers) {
    const float stddev = std::sqrt(2.0f / static_cast<float>(in_ch * 9));
    std::normal_distribution<float> dist(0.0f, stddev);
    nn::Tensor wt(nn::Shape{layer.out_channels, in_ch, 3, 3});
    for (auto& v : wt.values()) v = dist(rng);
    w.push_back(std::move(wt));
    nn::Tensor bt(nn::Shape{1, layer.out_channels, 1, 1});
    std::uniform_real_distribution<float> bias(-0.05f, 0.05f);
    for (auto& v : bt.values()) v = bias(rng);
    b.push_back(std::move(bt));
    in_ch = layer.out_channels;
  }
  return {std::move(w), std::move(b)};
}

std::pair<int, int> gap_columns(const GapSpec& gap, int stride, int width) {
  const int begin = gap.frame_start / stride;
  const int end = std::min(width, (gap.frame_end() + stride - 1) / stride);
  return {begin, end};
}

nn::Var zero_scalar() { return nn::Var(nn::Tensor(nn::Shape{}, 0.0f)); }

nn::Var sum_scalars(const std::vector<nn::Var>& terms) {
  if (terms.empty()) return zero_scalar();
  nn::Var total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = nn::add(total, terms[i]);
  return total;
}

}  // namespace

FeatureExtractor::FeatureExtractor(std::vector<Layer> layers, std::vector<int> taps,
                                   std::vector<nn::Tensor> weights,
                                   std::vector<nn::Tensor> biases, std::string name)
    : layers_(std::move(layers)), taps_(std::move(taps)), name_(std::move(name)) {
  require(weights.size() == layers_.size() && biases.size() == layers_.size(),
          ErrorCode::kShapeMismatch, "feature extractor: weight count mismatch");
  int in_ch = 3;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& ws = weights[i].shape();
    require(ws.n == layers_[i].out_channels && ws.c == in_ch && ws.h == 3 && ws.w == 3 &&
                biases[i].numel() == static_cast<std::size_t>(ws.n),
            ErrorCode::kShapeMismatch,
            name_ + ": layer " + std::to_string(i + 1) + " has shape " + ws.str());
    weights_.emplace_back(std::move(weights[i]), false);
    biases_.emplace_back(std::move(biases[i]), false);
    in_ch = layers_[i].out_channels;
  }
  for (int t : taps_) {
    require(t >= 1 && t <= static_cast<int>(layers_.size()), ErrorCode::kInvalidArgument,
            name_ + ": tap " + std::to_string(t) + " out of range");
    int stride = 1;
    for (int i = 0; i < t; ++i) stride *= layers_[i].pool_before ? 2 : 1;
    tap_strides_.push_back(stride);
  }
}

FeatureExtractor FeatureExtractor::vgg19(const std::filesystem::path& weights) {
  if (!std::filesystem::exists(weights)) {
    fail(ErrorCode::kUnavailable,
         "VGG19 weights not found at " + weights.string() +
             "; export them with tools/export_vgg19.py or use the test-double extractor");
  }
  const TensorArchive archive = read_archive(weights);
  auto layers = vgg19_layout(1);
  std::vector<nn::Tensor> w, b;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string name = vgg_layer_name(static_cast<int>(i));
    w.push_back(archive.at(name + ".weight"));
    nn::Tensor bias = archive.at(name + ".bias");
    b.emplace_back(nn::Shape{1, static_cast<int>(bias.numel()), 1, 1},
                   std::vector<float>(bias.values().begin(), bias.values().end()));
  }
  return FeatureExtractor(std::move(layers), kDefaultTaps, std::move(w), std::move(b), "vgg19");
}

FeatureExtractor FeatureExtractor::test_double(std::uint64_t seed, int width_divisor) {
  require(width_divisor >= 1, ErrorCode::kInvalidArgument, "test_double: divisor < 1");
  auto layers = vgg19_layout(width_divisor);
  auto [w, b] = random_weights(layers, seed);
  return FeatureExtractor(std::move(layers), kDefaultTaps, std::move(w), std::move(b),
                          "vgg19-test-double");
}

FeatureExtractor FeatureExtractor::toy(std::uint64_t seed) {
  std::vector<Layer> layers{{4, false}, {4, true}};
  auto [w, b] = random_weights(layers, seed);
  return FeatureExtractor(std::move(layers), {1, 2}, std::move(w), std::move(b), "toy");
}

FeatureExtractor FeatureExtractor::with_taps(std::vector<int> taps) const {
  std::vector<nn::Tensor> w, b;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    w.push_back(weights_[i].value());
    b.push_back(biases_[i].value());
  }
  return FeatureExtractor(layers_, std::move(taps), std::move(w), std::move(b), name_);
}

std::vector<nn::Var> FeatureExtractor::features(const nn::Var& image) const {
  require(image.shape().c == 1, ErrorCode::kShapeMismatch,
          name_ + ": expected single-channel image, got " + image.shape().str());
  // [-1, 1] -> [0, 1] -> ImageNet standardisation, fused into one affine map.
  std::vector<float> scale(3), shift(3);
  for (int c = 0; c < 3; ++c) {
    scale[c] = 0.5f / kImagenetStd[c];
    shift[c] = (0.5f - kImagenetMean[c]) / kImagenetStd[c];
  }
  nn::Var h = nn::channel_affine(nn::repeat_channels(image, 3), scale, shift);

  const int deepest = *std::max_element(taps_.begin(), taps_.end());
  std::vector<nn::Var> activations(deepest);
  for (int i = 0; i < deepest; ++i) {
    if (layers_[i].pool_before) h = nn::max_pool2x2(h);
    h = nn::relu(nn::conv2d(h, weights_[i], biases_[i], nn::ConvGeometry{1, 1, 1, 1}));
    activations[i] = h;
  }
  std::vector<nn::Var> out;
  for (int t : taps_) out.push_back(activations[t - 1]);
  return out;
}

std::string_view to_string(RecMode mode) {
  return mode == RecMode::kL1 ? "l1" : "vgg_feature";
}

RecMode parse_rec_mode(std::string_view name) {
  if (name == "l1") return RecMode::kL1;
  if (name == "vgg_feature" || name == "vgg") return RecMode::kVggFeature;
  fail(ErrorCode::kInvalidArgument, "unknown reconstruction mode '" + std::string(name) + "'");
}

void LossWeights::validate() const {
  require(lambda_adv >= 0.0f && lambda_rec >= 0.0f && lambda_chunk >= 0.0f &&
              lambda_l1_residual >= 0.0f,
          ErrorCode::kInvalidArgument, "loss weights must be non-negative");
}

nn::Var l1_loss(const nn::Var& generated, const nn::Var& target) {
  return nn::mean_abs_diff(generated, target);
}

nn::Var adversarial_loss_lsgan(const nn::Var& score_grid, float target_label) {
  return nn::mean_squared_to_constant(score_grid, target_label);
}

nn::Var vgg_feature_loss(const FeatureExtractor& extractor, const nn::Var& generated,
                         const nn::Var& target) {
  const auto fg = extractor.features(generated);
  const auto ft = extractor.features(target);
  std::vector<nn::Var> terms;
  for (std::size_t i = 0; i < fg.size(); ++i) terms.push_back(nn::mean_squared_diff(fg[i], ft[i]));
  return sum_scalars(terms);
}

nn::Var chunk_loss(const FeatureExtractor& extractor, const nn::Var& generated,
                   const nn::Var& target, const GapSpec& gap) {
  if (gap.frame_len <= 0) return zero_scalar();
  const auto fg = extractor.features(generated);
  const auto ft = extractor.features(target);
  std::vector<nn::Var> terms;
  for (std::size_t i = 0; i < fg.size(); ++i) {
    const auto [begin, end] = gap_columns(gap, extractor.tap_strides()[i], fg[i].shape().w);
    if (end <= begin) continue;
    terms.push_back(nn::mean_squared_diff(nn::slice_width(fg[i], begin, end),
                                          nn::slice_width(ft[i], begin, end)));
  }
  return sum_scalars(terms);
}

LossBreakdown generator_objective(const LossWeights& weights,
                                  const nn::Var& score_grid_on_fake,
                                  const nn::Var& generated, const nn::Var& target,
                                  const GapSpec& gap, const FeatureExtractor* extractor) {
  weights.validate();
  LossBreakdown out;
  std::vector<nn::Var> terms;

  const nn::Var adv = adversarial_loss_lsgan(score_grid_on_fake, 1.0f);
  out.adv = adv.value().item();
  terms.push_back(nn::scale(adv, weights.lambda_adv));

  if (weights.rec_mode == RecMode::kL1) {
    const nn::Var rec = l1_loss(generated, target);
    out.rec = rec.value().item();
    terms.push_back(nn::scale(rec, weights.lambda_rec));
  } else {
    require(extractor != nullptr, ErrorCode::kUnavailable,
            "feature reconstruction mode needs a feature extractor");
    const nn::Var rec = vgg_feature_loss(*extractor, generated, target);
    out.rec = rec.value().item();
    terms.push_back(nn::scale(rec, weights.lambda_rec));
    if (weights.lambda_chunk > 0.0f) {
      const nn::Var chunk = chunk_loss(*extractor, generated, target, gap);
      out.chunk = chunk.value().item();
      terms.push_back(nn::scale(chunk, weights.lambda_chunk));
    }
    if (weights.lambda_l1_residual > 0.0f) {
      const nn::Var l1 = l1_loss(generated, target);
      out.l1_residual = l1.value().item();
      terms.push_back(nn::scale(l1, weights.lambda_l1_residual));
    }
  }
  out.total = sum_scalars(terms);
  return out;
}

nn::Var discriminator_objective(const nn::Var& grid_on_real, const nn::Var& grid_on_fake) {
  require(grid_on_real.shape() == grid_on_fake.shape(), ErrorCode::kShapeMismatch,
          "discriminator_objective: grid shapes differ");
  return nn::scale(nn::add(adversarial_loss_lsgan(grid_on_real, 1.0f),
                           adversarial_loss_lsgan(grid_on_fake, 0.0f)),
                   0.5f);
}

}  // namespace melfill
