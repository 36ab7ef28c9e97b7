#include "melfill/nn/layers.hpp"

#include <numeric>

#include "melfill/error.hpp"

namespace melfill::nn {

Var& ParameterSet::add(std::string name, Tensor init) {
  for (const auto& p : params_) {
    require(p.name != name, ErrorCode::kInvalidArgument,
            "duplicate parameter name " + name);
  }
  params_.push_back({std::move(name), Var(std::move(init), true)});
  return params_.back().var;
}

void ParameterSet::add_buffer(std::string name, Tensor* tensor) {
  buffers_.push_back({std::move(name), tensor});
}

std::size_t ParameterSet::count() const {
  return std::accumulate(params_.begin(), params_.end(), std::size_t{0},
                         [](std::size_t acc, const NamedParameter& p) {
                           return acc + p.var.value().numel();
                         });
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

Tensor normal_init(Shape shape, float mean, float stddev, std::mt19937_64& rng) {
  Tensor t(shape);
  std::normal_distribution<float> dist(mean, stddev);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

Conv2d::Conv2d(ParameterSet& params, const std::string& name, int in_ch,
               int out_ch, int kernel_h, int kernel_w, ConvGeometry geom,
               bool bias, std::mt19937_64& rng)
    : geom_(geom) {
  weight_ = params.add(name + ".weight",
                       normal_init(Shape{out_ch, in_ch, kernel_h, kernel_w},
                                   0.0f, 0.02f, rng));
  if (bias) bias_ = params.add(name + ".bias", Tensor(Shape{1, out_ch, 1, 1}));
}

Var Conv2d::operator()(const Var& x) const {
  return conv2d(x, weight_, bias_, geom_);
}

ConvTranspose2d::ConvTranspose2d(ParameterSet& params, const std::string& name,
                                 int in_ch, int out_ch, int kernel_h,
                                 int kernel_w, ConvGeometry geom, bool bias,
                                 std::mt19937_64& rng)
    : geom_(geom) {
  weight_ = params.add(name + ".weight",
                       normal_init(Shape{in_ch, out_ch, kernel_h, kernel_w},
                                   0.0f, 0.02f, rng));
  if (bias) bias_ = params.add(name + ".bias", Tensor(Shape{1, out_ch, 1, 1}));
}

Var ConvTranspose2d::operator()(const Var& x) const {
  return conv_transpose2d(x, weight_, bias_, geom_);
}

BatchNorm2d::BatchNorm2d(ParameterSet& params, const std::string& name,
                         int channels, std::mt19937_64& rng) {
  gamma_ = params.add(name + ".gamma",
                      normal_init(Shape{1, channels, 1, 1}, 1.0f, 0.02f, rng));
  beta_ = params.add(name + ".beta", Tensor(Shape{1, channels, 1, 1}));
  state_.running_mean = Tensor(Shape{1, channels, 1, 1}, 0.0f);
  state_.running_var = Tensor(Shape{1, channels, 1, 1}, 1.0f);
  params.add_buffer(name + ".running_mean", &state_.running_mean);
  params.add_buffer(name + ".running_var", &state_.running_var);
}

Var BatchNorm2d::operator()(const Var& x, bool training,
                            bool batch_stats_at_inference) {
  const bool batch_stats = training || batch_stats_at_inference;
  return batch_norm(x, gamma_, beta_, state_, batch_stats, training);
}

}  // namespace melfill::nn
