#include <random>

#include "../gradcheck.hpp"
#include "melfill/losses.hpp"
#include "support.hpp"

using namespace melfill;

namespace {

nn::Tensor random_image(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-0.9f, 0.9f);
  nn::Tensor t({1, 1, h, w});
  for (float& v : t.values()) v = u(rng);
  return t;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("l1 and lsgan on hand-sized inputs") {
  const nn::Var a(nn::Tensor({1, 1, 1, 4}, {0.0f, 1.0f, -1.0f, 0.5f}));
  const nn::Var b(nn::Tensor({1, 1, 1, 4}, {1.0f, 1.0f, 1.0f, -0.5f}));
  CHECK(l1_loss(a, b).value().item() == doctest::Approx(1.0));  // (1 + 0 + 2 + 1) / 4
  const nn::Var s(nn::Tensor({1, 1, 2, 2}, {0.0f, 0.5f, 1.0f, 0.25f}));
  CHECK(adversarial_loss_lsgan(s, 1.0f).value().item() == doctest::Approx((1 + 0.25 + 0 + 0.5625) / 4));
  CHECK(adversarial_loss_lsgan(s, 0.0f).value().item() == doctest::Approx((0 + 0.25 + 1 + 0.0625) / 4));
}

TEST_CASE("discriminator objective halves the two terms") {
  const nn::Var real(nn::Tensor({1, 1, 2, 2}, 0.75f));
  const nn::Var fake(nn::Tensor({1, 1, 2, 2}, 0.5f));
  CHECK(discriminator_objective(real, fake).value().item() == doctest::Approx(0.5 * (0.0625 + 0.25)));
  CHECK(support::error_code_of([&] { discriminator_objective(real, nn::Var(nn::Tensor({1, 1, 1, 2}))); }) ==
        ErrorCode::kShapeMismatch);
}

TEST_CASE("feature loss vanishes on identical inputs") {
  const FeatureExtractor toy = FeatureExtractor::toy();
  const nn::Var x(random_image(8, 8, 1));
  CHECK(vgg_feature_loss(toy, x, x).value().item() == 0.0f);
  CHECK(vgg_feature_loss(toy, x, nn::Var(random_image(8, 8, 2))).value().item() > 0.0f);
}

TEST_CASE("chunk loss restricted to nothing is zero and to everything is the feature loss") {
  const FeatureExtractor ex = FeatureExtractor::test_double();
  const nn::Var x(random_image(16, 32, 3));
  const nn::Var t(random_image(16, 32, 4));
  GapSpec none;
  none.frame_start = 32;
  none.frame_len = 0;
  CHECK(chunk_loss(ex, x, t, none).value().item() == 0.0f);
  GapSpec all;
  all.frame_start = 0;
  all.frame_len = 32;
  CHECK(chunk_loss(ex, x, t, all).value().item() == vgg_feature_loss(ex, x, t).value().item());
}

TEST_CASE("chunk loss ignores differences outside the gap") {
  const FeatureExtractor toy = FeatureExtractor::toy();
  nn::Tensor a = random_image(8, 16, 5);
  nn::Tensor b = a;
  // Differ only in the first four columns; gap covers the last four. The
  // toy receptive field (3x3, pool, 3x3) does not reach across.
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 4; ++c) b.data()[r * 16 + c] += 0.5f;
  GapSpec gap;
  gap.frame_start = 12;
  gap.frame_len = 4;
  CHECK(chunk_loss(toy, nn::Var(a), nn::Var(b), gap).value().item() == 0.0f);
  CHECK(vgg_feature_loss(toy, nn::Var(a), nn::Var(b)).value().item() > 0.0f);
}

TEST_CASE("tap order does not change the feature loss") {
  const FeatureExtractor toy = FeatureExtractor::toy();
  const FeatureExtractor swapped = toy.with_taps({2, 1});
  CHECK(swapped.tap_strides() == std::vector<int>{2, 1});
  const nn::Var x(random_image(8, 8, 6));
  const nn::Var t(random_image(8, 8, 7));
  CHECK(vgg_feature_loss(swapped, x, t).value().item() ==
        doctest::Approx(vgg_feature_loss(toy, x, t).value().item()).epsilon(1e-6));
}

TEST_CASE("feature loss gradient on a small image") {
  const FeatureExtractor toy = FeatureExtractor::toy();
  const nn::Var t(random_image(8, 8, 9));
  nn::Tensor x = random_image(8, 8, 8);
  const auto r = gradcheck::check([&](const nn::Var& v) { return vgg_feature_loss(toy, v, t); }, x);
  CHECK(r.normwise_rel_error < 1e-3);
}

TEST_CASE("missing pretrained weights are reported as unavailable") {
  CHECK(support::error_code_of([] { FeatureExtractor::vgg19("/nonexistent/vgg19.bin"); }) ==
        ErrorCode::kUnavailable);
}

TEST_CASE("objective weights and modes") {
  LossWeights w;
  w.lambda_rec = -1.0f;
  CHECK(support::error_code_of([&] { w.validate(); }) == ErrorCode::kInvalidArgument);
  CHECK(parse_rec_mode("l1") == RecMode::kL1);
  CHECK(parse_rec_mode("vgg_feature") == RecMode::kVggFeature);
  CHECK(support::error_code_of([] { parse_rec_mode("ssim"); }) == ErrorCode::kInvalidArgument);

  const nn::Var grid(nn::Tensor({1, 1, 2, 2}, 0.5f));
  const nn::Var g(nn::Tensor({1, 1, 2, 2}, 0.2f));
  const nn::Var t(nn::Tensor({1, 1, 2, 2}, -0.2f));
  GapSpec gap;
  gap.frame_start = 1;
  gap.frame_len = 1;
  LossWeights l1;
  const LossBreakdown b = generator_objective(l1, grid, g, t, gap, nullptr);
  CHECK(b.adv == doctest::Approx(0.25));
  CHECK(b.rec == doctest::Approx(0.4));
  CHECK(b.total.value().item() == doctest::Approx(0.25 + 100 * 0.4));

  LossWeights feat;
  feat.rec_mode = RecMode::kVggFeature;
  CHECK(support::error_code_of([&] { generator_objective(feat, grid, g, t, gap, nullptr); }) ==
        ErrorCode::kUnavailable);
}

}  // TEST_SUITE
