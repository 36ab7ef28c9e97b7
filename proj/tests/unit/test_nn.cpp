#include <random>

#include "../gradcheck.hpp"
#include "../oracles.hpp"
#include "melfill/nn/adam.hpp"
#include "melfill/nn/layers.hpp"
#include "support.hpp"

using namespace melfill;
using nn::Shape;
using nn::Tensor;
using nn::Var;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  Tensor t(s);
  for (float& v : t.values()) v = u(rng);
  return t;
}

std::vector<double> as_double(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// Squared distance to a fixed random tensor: a scalar with dense gradients.
Var probe_loss(const Var& y, std::uint64_t seed = 99) {
  return nn::mean_squared_diff(y, Var(random_tensor(y.shape(), seed)));
}

constexpr double kTol = 1e-3;

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("conv2d forward matches direct correlation") {
  const Tensor x = random_tensor({1, 3, 7, 9}, 1);
  const Tensor w = random_tensor({4, 3, 4, 4}, 2);
  for (int stride : {1, 2}) {
    const Var y = nn::conv2d(Var(x), Var(w), Var(), {stride, stride, 1, 1});
    int ho, wo;
    const auto ref = oracle::conv2d(as_double(x), 3, 7, 9, as_double(w), 4, 4, 4, stride, 1, ho, wo);
    REQUIRE(y.shape() == Shape{1, 4, ho, wo});
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y.value().data()[i] == doctest::Approx(ref[i]).epsilon(1e-5));
  }
}

TEST_CASE("conv2d honours separate height and width strides") {
  const Tensor x = random_tensor({1, 2, 5, 8}, 3);
  const Tensor w = random_tensor({2, 2, 4, 4}, 4);
  const Var y = nn::conv2d(Var(x), Var(w), Var(), {1, 2, 1, 1});
  CHECK(y.shape() == Shape{1, 2, 4, 4});
}

TEST_CASE("conv_transpose2d forward matches scatter oracle") {
  const Tensor x = random_tensor({1, 3, 4, 5}, 5);
  const Tensor w = random_tensor({3, 2, 4, 4}, 6);
  const Var y = nn::conv_transpose2d(Var(x), Var(w), Var(), {2, 2, 1, 1});
  int ho, wo;
  const auto ref = oracle::conv_transpose2d(as_double(x), 3, 4, 5, as_double(w), 2, 4, 4, 2, 1, ho, wo);
  REQUIRE(y.shape() == Shape{1, 2, ho, wo});
  CHECK(ho == 8);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y.value().data()[i] == doctest::Approx(ref[i]).epsilon(1e-5));
}

TEST_CASE("conv gradients agree with finite differences") {
  const Tensor x = random_tensor({1, 2, 6, 6}, 7);
  const Tensor w = random_tensor({3, 2, 4, 4}, 8, -0.5f, 0.5f);
  const Tensor b = random_tensor({1, 3, 1, 1}, 9);
  const nn::ConvGeometry g{2, 2, 1, 1};
  CHECK(gradcheck::check([&](const Var& v) { return probe_loss(nn::conv2d(v, Var(w), Var(b), g)); }, x)
            .normwise_rel_error < kTol);
  CHECK(gradcheck::check([&](const Var& v) { return probe_loss(nn::conv2d(Var(x), v, Var(b), g)); }, w)
            .normwise_rel_error < kTol);
  CHECK(gradcheck::check([&](const Var& v) { return probe_loss(nn::conv2d(Var(x), Var(w), v, g)); }, b)
            .normwise_rel_error < kTol);

  const Tensor wt = random_tensor({2, 3, 4, 4}, 10, -0.5f, 0.5f);
  const Tensor xt = random_tensor({1, 2, 3, 3}, 11);
  CHECK(gradcheck::check([&](const Var& v) { return probe_loss(nn::conv_transpose2d(v, Var(wt), Var(), g)); }, xt)
            .normwise_rel_error < kTol);
  CHECK(gradcheck::check([&](const Var& v) { return probe_loss(nn::conv_transpose2d(Var(xt), v, Var(), g)); }, wt)
            .normwise_rel_error < kTol);
}

TEST_CASE("batch norm normalises per channel and back-propagates") {
  const Tensor x = random_tensor({1, 3, 4, 5}, 12, -2.0f, 3.0f);
  const Tensor gamma = random_tensor({1, 3, 1, 1}, 13, 0.5f, 1.5f);
  const Tensor beta = random_tensor({1, 3, 1, 1}, 14);
  nn::BatchNormState state{Tensor({1, 3, 1, 1}, 0.0f), Tensor({1, 3, 1, 1}, 1.0f)};
  const Var y = nn::batch_norm(Var(x), Var(Tensor({1, 3, 1, 1}, 1.0f)), Var(Tensor({1, 3, 1, 1}, 0.0f)),
                               state, true, true);
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0, sq = 0.0;
    for (int h = 0; h < 4; ++h)
      for (int w = 0; w < 5; ++w) mean += y.value().at(0, c, h, w);
    mean /= 20.0;
    for (int h = 0; h < 4; ++h)
      for (int w = 0; w < 5; ++w) sq += std::pow(y.value().at(0, c, h, w) - mean, 2);
    CHECK(mean == doctest::Approx(0.0).scale(1.0).epsilon(1e-5));
    CHECK(sq / 20.0 == doctest::Approx(1.0).epsilon(1e-3));
  }
  CHECK(state.running_mean.at(0, 0, 0, 0) != 0.0f);

  nn::BatchNormState s2{Tensor({1, 3, 1, 1}, 0.0f), Tensor({1, 3, 1, 1}, 1.0f)};
  auto f = [&](const Var& v) { return probe_loss(nn::batch_norm(v, Var(gamma), Var(beta), s2, true, false)); };
  CHECK(gradcheck::check(f, x, 1e-2f).normwise_rel_error < kTol);
  auto fg = [&](const Var& v) { return probe_loss(nn::batch_norm(Var(x), v, Var(beta), s2, true, false)); };
  CHECK(gradcheck::check(fg, gamma).normwise_rel_error < kTol);
}

TEST_CASE("pointwise ops and shape ops back-propagate") {
  const Tensor x = random_tensor({1, 2, 4, 4}, 15);
  CHECK(gradcheck::check([](const Var& v) { return probe_loss(nn::tanh(v)); }, x).normwise_rel_error < kTol);
  CHECK(gradcheck::check([](const Var& v) { return probe_loss(nn::sigmoid(v)); }, x).normwise_rel_error < kTol);
  CHECK(gradcheck::check([](const Var& v) { return probe_loss(nn::scale(v, -2.5f)); }, x).normwise_rel_error < kTol);
  CHECK(gradcheck::check([](const Var& v) { return probe_loss(nn::repeat_channels(v, 3)); }, x).normwise_rel_error < kTol);
  CHECK(gradcheck::check([](const Var& v) { return probe_loss(nn::slice_width(v, 1, 3)); }, x).normwise_rel_error < kTol);
  CHECK(gradcheck::check([](const Var& v) { return probe_loss(nn::concat_channels(v, nn::scale(v, 2.0f))); }, x)
            .normwise_rel_error < kTol);
  CHECK(gradcheck::check([](const Var& v) { return probe_loss(nn::channel_affine(v, {2.0f, -1.0f}, {0.5f, 0.25f})); }, x)
            .normwise_rel_error < kTol);
  CHECK(gradcheck::check([](const Var& v) { return probe_loss(nn::add(v, nn::tanh(v))); }, x).normwise_rel_error < kTol);
}

TEST_CASE("piecewise-linear ops back-propagate away from kinks") {
  // Values at least 0.2 from zero and pairwise distinct inside pooling windows.
  Tensor x({1, 1, 4, 4});
  for (int i = 0; i < 16; ++i) x.data()[i] = (i % 2 ? 1.0f : -1.0f) * (0.2f + 0.1f * i);
  CHECK(gradcheck::check([](const Var& v) { return probe_loss(nn::relu(v)); }, x, 1e-2f).normwise_rel_error < kTol);
  CHECK(gradcheck::check([](const Var& v) { return probe_loss(nn::leaky_relu(v, 0.2f)); }, x, 1e-2f).normwise_rel_error < kTol);
  CHECK(gradcheck::check([](const Var& v) { return probe_loss(nn::max_pool2x2(v)); }, x, 1e-2f).normwise_rel_error < kTol);
  const Var y = nn::max_pool2x2(Var(x));
  CHECK(y.shape() == Shape{1, 1, 2, 2});
}

TEST_CASE("reductions") {
  const Tensor a({1, 1, 2, 2}, std::vector<float>{0, 1, 2, 3});
  const Tensor b({1, 1, 2, 2}, std::vector<float>{1, 1, 1, 1});
  CHECK(nn::mean_abs_diff(Var(a), Var(b)).value().item() == doctest::Approx(1.0));
  CHECK(nn::mean_squared_diff(Var(a), Var(b)).value().item() == doctest::Approx(1.5));
  CHECK(nn::mean_squared_to_constant(Var(a), 0.0f).value().item() == doctest::Approx(3.5));
}

TEST_CASE("dropout is inverted, seeded and absent from the graph under no-grad") {
  const Tensor x({1, 4, 16, 16}, 1.0f);
  std::mt19937_64 r1(3), r2(3);
  const Var a = nn::dropout(Var(x), 0.5f, r1);
  const Var b = nn::dropout(Var(x), 0.5f, r2);
  CHECK(std::equal(a.value().values().begin(), a.value().values().end(), b.value().values().begin()));
  double mean = 0.0;
  for (float v : a.value().values()) {
    CHECK((v == 0.0f || v == doctest::Approx(2.0f)));
    mean += v;
  }
  CHECK(mean / x.numel() == doctest::Approx(1.0).epsilon(0.1));

  nn::NoGradGuard guard;
  CHECK_FALSE(nn::grad_enabled());
  const Var y = nn::tanh(Var(x, true));
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("adam applies the bias-corrected update") {
  nn::ParameterSet params;
  Var& p = params.add("p", Tensor({1, 1, 1, 2}, std::vector<float>{1.0f, -2.0f}));
  nn::AdamOptions o;
  o.lr = 0.1f;
  nn::Adam adam(params, o);
  // loss = mean((p - 0)^2) -> grad = p (2 * p / 2 elements)
  nn::backward(nn::mean_squared_to_constant(p, 0.0f));
  adam.step();
  // First step: m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps) = lr * sign(g).
  CHECK(p.value().data()[0] == doctest::Approx(0.9f).epsilon(1e-5));
  CHECK(p.value().data()[1] == doctest::Approx(-1.9f).epsilon(1e-5));
  CHECK(adam.steps() == 1);

  // Second step with the same gradient direction, hand-rolled.
  const double g1a = 1.0, g2a = 0.9;
  params.zero_grad();
  nn::backward(nn::mean_squared_to_constant(p, 0.0f));
  adam.step();
  const double m = 0.5 * (0.5 * g1a) + 0.5 * g2a;
  const double v = 0.999 * (0.001 * g1a * g1a) + 0.001 * g2a * g2a;
  const double mhat = m / (1 - 0.25), vhat = v / (1 - 0.999 * 0.999);
  CHECK(p.value().data()[0] == doctest::Approx(0.9 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8)).epsilon(1e-5));
}

TEST_CASE("layer registration and counts") {
  nn::ParameterSet params;
  std::mt19937_64 rng(1);
  nn::Conv2d conv(params, "c", 3, 5, 4, 4, {2, 2, 1, 1}, true, rng);
  nn::BatchNorm2d bn(params, "bn", 5, rng);
  CHECK(params.count() == 3u * 5u * 16u + 5u + 2u * 5u);
  CHECK(params.parameters().size() == 4u);
  CHECK(params.buffers().size() == 2u);
}

}  // TEST_SUITE
