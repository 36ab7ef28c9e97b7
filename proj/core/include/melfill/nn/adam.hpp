#pragma once

#include <cstdint>
#include <vector>

#include "melfill/nn/layers.hpp"

namespace melfill::nn {

struct AdamOptions {
  float lr = 1e-4f;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float clip_norm = 0.0f;  // 0 disables global-norm clipping
};

class Adam {
 public:
  Adam(ParameterSet& params, AdamOptions options);

  /// Applies one update from the accumulated gradients; parameters without a
  /// gradient are left untouched.
  void step();

  std::int64_t steps() const { return t_; }
  const AdamOptions& options() const { return options_; }

  // Moment access for checkpointing.
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  ParameterSet* params_;
  AdamOptions options_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::int64_t t_ = 0;
};

}  // namespace melfill::nn
