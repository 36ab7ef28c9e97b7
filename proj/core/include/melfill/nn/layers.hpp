#pragma once

#include <random>
#include <string>
#include <vector>

#include "melfill/nn/autograd.hpp"

namespace melfill::nn {

struct NamedParameter {
  std::string name;
  Var var;
};

struct NamedBuffer {
  std::string name;
  Tensor* tensor;
};

/// Flat registry of trainable parameters and persistent buffers of a network.
class ParameterSet {
 public:
  Var& add(std::string name, Tensor init);
  void add_buffer(std::string name, Tensor* tensor);

  std::vector<NamedParameter>& parameters() { return params_; }
  const std::vector<NamedParameter>& parameters() const { return params_; }
  const std::vector<NamedBuffer>& buffers() const { return buffers_; }

  std::size_t count() const;
  void zero_grad();

 private:
  std::vector<NamedParameter> params_;
  std::vector<NamedBuffer> buffers_;
};

/// N(0, 0.02) weights as in DCGAN-style initialisation.
Tensor normal_init(Shape shape, float mean, float stddev, std::mt19937_64& rng);

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterSet& params, const std::string& name, int in_ch, int out_ch,
         int kernel_h, int kernel_w, ConvGeometry geom, bool bias,
         std::mt19937_64& rng);
  Var operator()(const Var& x) const;

  const ConvGeometry& geometry() const { return geom_; }

 private:
  Var weight_;
  Var bias_;
  ConvGeometry geom_;
};

class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(ParameterSet& params, const std::string& name, int in_ch,
                  int out_ch, int kernel_h, int kernel_w, ConvGeometry geom,
                  bool bias, std::mt19937_64& rng);
  Var operator()(const Var& x) const;

 private:
  Var weight_;
  Var bias_;
  ConvGeometry geom_;
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(ParameterSet& params, const std::string& name, int channels,
              std::mt19937_64& rng);
  BatchNorm2d(const BatchNorm2d&) = delete;
  BatchNorm2d& operator=(const BatchNorm2d&) = delete;
  BatchNorm2d(BatchNorm2d&&) = delete;

  /// `training` uses per-call statistics and updates the running estimates.
  /// In inference, `batch_stats_at_inference` selects per-call statistics
  /// without touching the running estimates.
  Var operator()(const Var& x, bool training, bool batch_stats_at_inference);

 private:
  Var gamma_;
  Var beta_;
  BatchNormState state_;
};

}  // namespace melfill::nn
