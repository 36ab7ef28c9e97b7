#pragma once

#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "melfill/nn/tensor.hpp"

namespace melfill::nn {

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  Tensor& grad_buffer();
};

/// Handle to a value in the computation graph. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }

  /// Gradient after backward(); empty if nothing flowed here.
  const Tensor& grad() const { return node_->grad; }
  void zero_grad();

  /// Leaf holding a copy of this value, cut from the graph.
  Var detach() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

  static Var from_node(std::shared_ptr<Node> node);

 private:
  std::shared_ptr<Node> node_;
};

/// Disables graph recording for its lifetime (thread-local).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Reverse sweep from a scalar root; seeds d(root)/d(root) = 1.
void backward(const Var& root);

// Graph construction helper for op implementations.
Var make_result(Tensor value, std::vector<Var> inputs,
                std::function<void(Node&)> backward_fn);

struct ConvGeometry {
  int stride_h = 1;
  int stride_w = 1;
  int pad_h = 0;
  int pad_w = 0;
};

// weight: [Cout, Cin, kh, kw]; bias: [1, Cout, 1, 1] or undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias,
           const ConvGeometry& geom);
// weight: [Cin, Cout, kh, kw]; output extent (in-1)*s - 2p + k.
Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias,
                     const ConvGeometry& geom);

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  float momentum = 0.1f;
  float eps = 1e-5f;
};
// gamma, beta: [1, C, 1, 1].
Var batch_norm(const Var& x, const Var& gamma, const Var& beta,
               BatchNormState& state, bool use_batch_stats,
               bool update_running);

Var leaky_relu(const Var& x, float slope);
Var relu(const Var& x);
Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var dropout(const Var& x, float p, std::mt19937_64& rng);
Var max_pool2x2(const Var& x);

Var concat_channels(const Var& a, const Var& b);
Var concat_channels(const std::vector<Var>& parts);
Var repeat_channels(const Var& x, int copies);
/// Per-channel affine map y = x * scale[c] + shift[c] with constant coefficients.
Var channel_affine(const Var& x, const std::vector<float>& scale,
                   const std::vector<float>& shift);
Var slice_width(const Var& x, int begin, int end);

Var add(const Var& a, const Var& b);
Var scale(const Var& x, float factor);

// Scalar reductions.
Var mean_abs_diff(const Var& a, const Var& b);
Var mean_squared_diff(const Var& a, const Var& b);
Var mean_squared_to_constant(const Var& x, float target);

}  // namespace melfill::nn
