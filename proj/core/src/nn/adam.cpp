#include "melfill/nn/adam.hpp"

#include <cmath>

namespace melfill::nn {

Adam::Adam(ParameterSet& params, AdamOptions options)
    : params_(&params), options_(options) {
  for (const auto& p : params.parameters()) {
    m_.emplace_back(p.var.shape(), 0.0f);
    v_.emplace_back(p.var.shape(), 0.0f);
  }
}

void Adam::step() {
  ++t_;
  auto& params = params_->parameters();

  float clip_scale = 1.0f;
  if (options_.clip_norm > 0.0f) {
    double sq = 0.0;
    for (const auto& p : params) {
      for (float g : p.var.grad().values()) sq += static_cast<double>(g) * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > options_.clip_norm) clip_scale = static_cast<float>(options_.clip_norm / norm);
  }

  const double bc1 = 1.0 - std::pow(static_cast<double>(options_.beta1), t_);
  const double bc2 = 1.0 - std::pow(static_cast<double>(options_.beta2), t_);
  const float step_size = static_cast<float>(options_.lr / bc1);
  const float bc2_sqrt = static_cast<float>(std::sqrt(bc2));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Tensor& grad = params[k].var.grad();
    if (grad.empty()) continue;
    float* w = params[k].var.mutable_value().data();
    float* m = m_[k].data();
    float* v = v_[k].data();
    const float* g = grad.data();
    for (std::size_t i = 0; i < grad.numel(); ++i) {
      const float gi = g[i] * clip_scale;
      m[i] = options_.beta1 * m[i] + (1.0f - options_.beta1) * gi;
      v[i] = options_.beta2 * v[i] + (1.0f - options_.beta2) * gi * gi;
      w[i] -= step_size * m[i] / (std::sqrt(v[i]) / bc2_sqrt + options_.eps);
    }
  }
}

}  // namespace melfill::nn
