#include "melfill/nn/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "melfill/error.hpp"

namespace melfill::nn {

namespace {

thread_local bool g_grad_enabled = true;

using MatR = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!(a.shape() == b.shape())) {
    fail(ErrorCode::kShapeMismatch, std::string(op) + ": shape " +
                                        a.shape().str() + " vs " +
                                        b.shape().str());
  }
}

bool wants_grad(const Node& n) { return n.requires_grad; }

// Lowered patch matrix: row (c*kh + i)*kw + j, column oh*Wo + ow.
void im2col(const float* x, int channels, int height, int width, int kh,
            int kw, const ConvGeometry& g, int out_h, int out_w, float* col) {
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < channels; ++c) {
    const float* xc = x + static_cast<std::size_t>(c) * height * width;
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        float* row = col + ((static_cast<std::size_t>(c) * kh + i) * kw + j) * plane;
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * g.stride_h - g.pad_h + i;
          float* dst = row + static_cast<std::size_t>(oh) * out_w;
          if (ih < 0 || ih >= height) {
            std::fill(dst, dst + out_w, 0.0f);
            continue;
          }
          const float* src = xc + static_cast<std::size_t>(ih) * width;
          for (int ow = 0; ow < out_w; ++ow) {
            const int iw = ow * g.stride_w - g.pad_w + j;
            dst[ow] = (iw >= 0 && iw < width) ? src[iw] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_add(const float* col, int channels, int height, int width, int kh,
                int kw, const ConvGeometry& g, int out_h, int out_w, float* x) {
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < channels; ++c) {
    float* xc = x + static_cast<std::size_t>(c) * height * width;
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        const float* row =
            col + ((static_cast<std::size_t>(c) * kh + i) * kw + j) * plane;
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * g.stride_h - g.pad_h + i;
          if (ih < 0 || ih >= height) continue;
          const float* src = row + static_cast<std::size_t>(oh) * out_w;
          float* dst = xc + static_cast<std::size_t>(ih) * width;
          for (int ow = 0; ow < out_w; ++ow) {
            const int iw = ow * g.stride_w - g.pad_w + j;
            if (iw >= 0 && iw < width) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

template <typename Fn>
Tensor unary(const Var& x, Fn&& fn) {
  Tensor out(x.shape());
  const float* in = x.value().data();
  float* o = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) o[i] = fn(in[i]);
  return out;
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape(), 0.0f);
  return grad;
}

Var::Var(Tensor value, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var Var::from_node(std::shared_ptr<Node> node) {
  Var v;
  v.node_ = std::move(node);
  return v;
}

void Var::zero_grad() {
  if (node_) node_->grad = Tensor();
}

Var Var::detach() const { return Var(node_->value, false); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Var make_result(Tensor value, std::vector<Var> inputs,
                std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Var& v) {
      return v.defined() && v.requires_grad();
    });
    if (any) {
      node->requires_grad = true;
      for (auto& in : inputs) node->inputs.push_back(in.shared());
      node->backward = std::move(backward_fn);
    }
  }
  return Var::from_node(std::move(node));
}

void backward(const Var& root) {
  require(root.defined() && root.value().numel() == 1,
          ErrorCode::kInvalidArgument, "backward: root must be a scalar");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child && child->requires_grad && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer().data()[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->backward || node->grad.empty()) continue;
    node->backward(*node);
    node->grad = Tensor();  // intermediate gradients are not kept
  }
}

Var conv2d(const Var& x, const Var& weight, const Var& bias,
           const ConvGeometry& geom) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  require(xs.c == ws.c, ErrorCode::kShapeMismatch,
          "conv2d: input channels " + std::to_string(xs.c) +
              " vs weight " + ws.str());
  const int kh = ws.h, kw = ws.w, cout = ws.n;
  const int out_h = (xs.h + 2 * geom.pad_h - kh) / geom.stride_h + 1;
  const int out_w = (xs.w + 2 * geom.pad_w - kw) / geom.stride_w + 1;
  require(out_h >= 1 && out_w >= 1 && xs.h + 2 * geom.pad_h >= kh &&
              xs.w + 2 * geom.pad_w >= kw,
          ErrorCode::kShapeMismatch,
          "conv2d: input " + xs.str() + " smaller than kernel " + ws.str());

  const int k = xs.c * kh * kw;
  const int p = out_h * out_w;
  auto cols = std::make_shared<FloatBuffer>(
      static_cast<std::size_t>(xs.n) * k * p);
  Tensor out(Shape{xs.n, cout, out_h, out_w});
  CMapR wmat(weight.value().data(), cout, k);
  for (int n = 0; n < xs.n; ++n) {
    float* col = cols->data() + static_cast<std::size_t>(n) * k * p;
    im2col(x.value().data() + static_cast<std::size_t>(n) * xs.c * xs.plane(),
           xs.c, xs.h, xs.w, kh, kw, geom, out_h, out_w, col);
    MapR o(out.data() + static_cast<std::size_t>(n) * cout * p, cout, p);
    o.noalias() = wmat * CMapR(col, k, p);
    if (bias.defined()) {
      const float* b = bias.value().data();
      for (int c = 0; c < cout; ++c) o.row(c).array() += b[c];
    }
  }

  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(
      std::move(out), std::move(inputs),
      [cols, xs, kh, kw, cout, k, p, out_h, out_w, geom](Node& self) {
        Node& xn = *self.inputs[0];
        Node& wn = *self.inputs[1];
        Node* bn = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
        CMapR wmat(wn.value.data(), cout, k);
        for (int n = 0; n < xs.n; ++n) {
          CMapR gout(self.grad.data() + static_cast<std::size_t>(n) * cout * p,
                     cout, p);
          const float* col = cols->data() + static_cast<std::size_t>(n) * k * p;
          if (wants_grad(wn)) {
            MapR gw(wn.grad_buffer().data(), cout, k);
            gw.noalias() += gout * CMapR(col, k, p).transpose();
          }
          if (bn && wants_grad(*bn)) {
            float* gb = bn->grad_buffer().data();
            for (int c = 0; c < cout; ++c) gb[c] += gout.row(c).sum();
          }
          if (wants_grad(xn)) {
            MatR gcol = wmat.transpose() * gout;
            col2im_add(gcol.data(), xs.c, xs.h, xs.w, kh, kw, geom, out_h,
                       out_w,
                       xn.grad_buffer().data() +
                           static_cast<std::size_t>(n) * xs.c * xs.plane());
          }
        }
      });
}

Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias,
                     const ConvGeometry& geom) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  require(xs.c == ws.n, ErrorCode::kShapeMismatch,
          "conv_transpose2d: input channels " + std::to_string(xs.c) +
              " vs weight " + ws.str());
  const int cin = ws.n, cout = ws.c, kh = ws.h, kw = ws.w;
  const int out_h = (xs.h - 1) * geom.stride_h - 2 * geom.pad_h + kh;
  const int out_w = (xs.w - 1) * geom.stride_w - 2 * geom.pad_w + kw;
  require(out_h >= 1 && out_w >= 1, ErrorCode::kShapeMismatch,
          "conv_transpose2d: degenerate output for input " + xs.str());

  const int k = cout * kh * kw;
  const int p = xs.h * xs.w;
  Tensor out(Shape{xs.n, cout, out_h, out_w});
  CMapR wmat(weight.value().data(), cin, k);
  MatR col(k, p);
  for (int n = 0; n < xs.n; ++n) {
    CMapR xin(x.value().data() + static_cast<std::size_t>(n) * cin * p, cin, p);
    col.noalias() = wmat.transpose() * xin;
    float* o = out.data() + static_cast<std::size_t>(n) * cout * out_h * out_w;
    col2im_add(col.data(), cout, out_h, out_w, kh, kw, geom, xs.h, xs.w, o);
    if (bias.defined()) {
      const float* b = bias.value().data();
      const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
      for (int c = 0; c < cout; ++c) {
        float* oc = o + c * plane;
        for (std::size_t i = 0; i < plane; ++i) oc[i] += b[c];
      }
    }
  }

  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(
      std::move(out), std::move(inputs),
      [xs, cin, cout, kh, kw, k, p, out_h, out_w, geom](Node& self) {
        Node& xn = *self.inputs[0];
        Node& wn = *self.inputs[1];
        Node* bn = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
        CMapR wmat(wn.value.data(), cin, k);
        MatR gcol(k, p);
        const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
        for (int n = 0; n < xs.n; ++n) {
          const float* gout =
              self.grad.data() + static_cast<std::size_t>(n) * cout * out_plane;
          im2col(gout, cout, out_h, out_w, kh, kw, geom, xs.h, xs.w,
                 gcol.data());
          if (wants_grad(wn)) {
            CMapR xin(xn.value.data() + static_cast<std::size_t>(n) * cin * p,
                      cin, p);
            MapR gw(wn.grad_buffer().data(), cin, k);
            gw.noalias() += xin * gcol.transpose();
          }
          if (bn && wants_grad(*bn)) {
            float* gb = bn->grad_buffer().data();
            for (int c = 0; c < cout; ++c) {
              double s = 0.0;
              const float* g = gout + c * out_plane;
              for (std::size_t i = 0; i < out_plane; ++i) s += g[i];
              gb[c] += static_cast<float>(s);
            }
          }
          if (wants_grad(xn)) {
            MapR gx(xn.grad_buffer().data() + static_cast<std::size_t>(n) * cin * p,
                    cin, p);
            gx.noalias() += wmat * gcol;
          }
        }
      });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta,
               BatchNormState& state, bool use_batch_stats,
               bool update_running) {
  const Shape s = x.shape();
  require(gamma.value().numel() == static_cast<std::size_t>(s.c) &&
              beta.value().numel() == static_cast<std::size_t>(s.c),
          ErrorCode::kShapeMismatch, "batch_norm: channel mismatch for " + s.str());
  const std::size_t plane = s.plane();
  const std::size_t count = plane * s.n;

  std::vector<float> mean(s.c), invstd(s.c);
  for (int c = 0; c < s.c; ++c) {
    if (use_batch_stats) {
      double sum = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const float* xc = x.value().data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += xc[i];
      }
      const double m = sum / count;
      double sq = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const float* xc = x.value().data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = xc[i] - m;
          sq += d * d;
        }
      }
      const double var = sq / count;
      mean[c] = static_cast<float>(m);
      invstd[c] = static_cast<float>(1.0 / std::sqrt(var + state.eps));
      if (update_running) {
        const double unbiased = count > 1 ? sq / (count - 1) : var;
        state.running_mean.data()[c] =
            (1.0f - state.momentum) * state.running_mean.data()[c] +
            state.momentum * static_cast<float>(m);
        state.running_var.data()[c] =
            (1.0f - state.momentum) * state.running_var.data()[c] +
            state.momentum * static_cast<float>(unbiased);
      }
    } else {
      mean[c] = state.running_mean.data()[c];
      invstd[c] = 1.0f / std::sqrt(state.running_var.data()[c] + state.eps);
    }
  }

  auto xhat = std::make_shared<Tensor>(s);
  Tensor out(s);
  const float* g = gamma.value().data();
  const float* b = beta.value().data();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
      const float* xc = x.value().data() + off;
      float* hc = xhat->data() + off;
      float* oc = out.data() + off;
      for (std::size_t i = 0; i < plane; ++i) {
        hc[i] = (xc[i] - mean[c]) * invstd[c];
        oc[i] = hc[i] * g[c] + b[c];
      }
    }
  }

  return make_result(
      std::move(out), {x, gamma, beta},
      [xhat, invstd, s, plane, count, use_batch_stats](Node& self) {
        Node& xn = *self.inputs[0];
        Node& gn = *self.inputs[1];
        Node& bn = *self.inputs[2];
        const float* dy = self.grad.data();
        const float* h = xhat->data();
        std::vector<double> sum_dy(s.c, 0.0), sum_dy_h(s.c, 0.0);
        for (int n = 0; n < s.n; ++n) {
          for (int c = 0; c < s.c; ++c) {
            const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sum_dy[c] += dy[off + i];
              sum_dy_h[c] += static_cast<double>(dy[off + i]) * h[off + i];
            }
          }
        }
        if (wants_grad(gn)) {
          float* gg = gn.grad_buffer().data();
          for (int c = 0; c < s.c; ++c) gg[c] += static_cast<float>(sum_dy_h[c]);
        }
        if (wants_grad(bn)) {
          float* gb = bn.grad_buffer().data();
          for (int c = 0; c < s.c; ++c) gb[c] += static_cast<float>(sum_dy[c]);
        }
        if (!wants_grad(xn)) return;
        float* dx = xn.grad_buffer().data();
        const float* gam = gn.value.data();
        for (int n = 0; n < s.n; ++n) {
          for (int c = 0; c < s.c; ++c) {
            const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
            const double k = static_cast<double>(gam[c]) * invstd[c];
            if (use_batch_stats) {
              const double mdy = sum_dy[c] / count;
              const double mdyh = sum_dy_h[c] / count;
              for (std::size_t i = 0; i < plane; ++i) {
                dx[off + i] += static_cast<float>(
                    k * (dy[off + i] - mdy - h[off + i] * mdyh));
              }
            } else {
              for (std::size_t i = 0; i < plane; ++i) {
                dx[off + i] += static_cast<float>(k * dy[off + i]);
              }
            }
          }
        }
      });
}

Var leaky_relu(const Var& x, float slope) {
  return make_result(unary(x, [slope](float v) { return v > 0.0f ? v : slope * v; }), {x}, [slope](Node& self) {
    Node& xn = *self.inputs[0];
    float* dx = xn.grad_buffer().data();
    const float* v = xn.value.data();
    const float* dy = self.grad.data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) {
      dx[i] += v[i] > 0.0f ? dy[i] : slope * dy[i];
    }
  });
}

Var relu(const Var& x) { return leaky_relu(x, 0.0f); }

Var tanh(const Var& x) {
  return make_result(unary(x, [](float v) { return std::tanh(v); }), {x}, [](Node& self) {
    Node& xn = *self.inputs[0];
    float* dx = xn.grad_buffer().data();
    const float* y = self.value.data();
    const float* dy = self.grad.data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) {
      dx[i] += dy[i] * (1.0f - y[i] * y[i]);
    }
  });
}

Var sigmoid(const Var& x) {
  return make_result(unary(x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); }), {x}, [](Node& self) {
    Node& xn = *self.inputs[0];
    float* dx = xn.grad_buffer().data();
    const float* y = self.value.data();
    const float* dy = self.grad.data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) {
      dx[i] += dy[i] * y[i] * (1.0f - y[i]);
    }
  });
}

Var dropout(const Var& x, float p, std::mt19937_64& rng) {
  require(p >= 0.0f && p < 1.0f, ErrorCode::kInvalidArgument,
          "dropout: probability must lie in [0, 1)");
  auto mask = std::make_shared<std::vector<float>>(x.value().numel());
  std::bernoulli_distribution keep(1.0 - p);
  const float kept = 1.0f / (1.0f - p);
  for (auto& m : *mask) m = keep(rng) ? kept : 0.0f;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out.data()[i] = x.value().data()[i] * (*mask)[i];
  }
  return make_result(std::move(out), {x}, [mask](Node& self) {
    float* dx = self.inputs[0]->grad_buffer().data();
    const float* dy = self.grad.data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) dx[i] += dy[i] * (*mask)[i];
  });
}

Var max_pool2x2(const Var& x) {
  const Shape s = x.shape();
  const int oh = s.h / 2, ow = s.w / 2;
  require(oh >= 1 && ow >= 1, ErrorCode::kShapeMismatch,
          "max_pool2x2: input too small " + s.str());
  Tensor out(Shape{s.n, s.c, oh, ow});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.numel());
  std::size_t o = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j, ++o) {
          std::size_t best = x.value().index(n, c, 2 * i, 2 * j);
          for (int di = 0; di < 2; ++di) {
            for (int dj = 0; dj < 2; ++dj) {
              const std::size_t idx = x.value().index(n, c, 2 * i + di, 2 * j + dj);
              if (x.value().data()[idx] > x.value().data()[best]) best = idx;
            }
          }
          (*argmax)[o] = best;
          out.data()[o] = x.value().data()[best];
        }
      }
    }
  }
  return make_result(std::move(out), {x}, [argmax](Node& self) {
    float* dx = self.inputs[0]->grad_buffer().data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) {
      dx[(*argmax)[i]] += self.grad.data()[i];
    }
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorCode::kInvalidArgument, "concat: no inputs");
  Shape s = parts.front().shape();
  int channels = 0;
  for (const auto& p : parts) {
    const Shape& ps = p.shape();
    require(ps.n == s.n && ps.h == s.h && ps.w == s.w,
            ErrorCode::kShapeMismatch,
            "concat: spatial mismatch " + ps.str() + " vs " + s.str());
    channels += ps.c;
  }
  const Shape os{s.n, channels, s.h, s.w};
  Tensor out(os);
  std::vector<int> offsets;
  int c0 = 0;
  for (const auto& p : parts) {
    offsets.push_back(c0);
    const std::size_t chunk = static_cast<std::size_t>(p.shape().c) * s.plane();
    for (int n = 0; n < s.n; ++n) {
      std::copy_n(p.value().data() + n * chunk, chunk,
                  out.data() + out.index(n, c0, 0, 0));
    }
    c0 += p.shape().c;
  }
  return make_result(std::move(out), parts, [offsets, os](Node& self) {
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      Node& in = *self.inputs[k];
      if (!wants_grad(in)) continue;
      float* dx = in.grad_buffer().data();
      const std::size_t chunk = static_cast<std::size_t>(in.value.shape().c) * os.plane();
      for (int n = 0; n < os.n; ++n) {
        const float* src = self.grad.data() + self.grad.index(n, offsets[k], 0, 0);
        float* dst = dx + n * chunk;
        for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
      }
    }
  });
}

Var concat_channels(const Var& a, const Var& b) { return concat_channels(std::vector<Var>{a, b}); }

Var repeat_channels(const Var& x, int copies) {
  require(copies >= 1, ErrorCode::kInvalidArgument, "repeat_channels: copies < 1");
  std::vector<Var> parts(copies, x);
  return concat_channels(parts);
}

Var channel_affine(const Var& x, const std::vector<float>& scale_c,
                   const std::vector<float>& shift_c) {
  const Shape s = x.shape();
  require(scale_c.size() == static_cast<std::size_t>(s.c) &&
              shift_c.size() == static_cast<std::size_t>(s.c),
          ErrorCode::kShapeMismatch, "channel_affine: coefficient count");
  Tensor out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const std::size_t off = out.index(n, c, 0, 0);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        out.data()[off + i] = x.value().data()[off + i] * scale_c[c] + shift_c[c];
      }
    }
  }
  return make_result(std::move(out), {x}, [scale_c, s](Node& self) {
    float* dx = self.inputs[0]->grad_buffer().data();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const std::size_t off = self.grad.index(n, c, 0, 0);
        for (std::size_t i = 0; i < s.plane(); ++i) {
          dx[off + i] += self.grad.data()[off + i] * scale_c[c];
        }
      }
    }
  });
}

Var slice_width(const Var& x, int begin, int end) {
  const Shape s = x.shape();
  require(0 <= begin && begin < end && end <= s.w, ErrorCode::kInvalidArgument,
          "slice_width: range [" + std::to_string(begin) + "," +
              std::to_string(end) + ") outside width " + std::to_string(s.w));
  const Shape os{s.n, s.c, s.h, end - begin};
  Tensor out(os);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int h = 0; h < s.h; ++h)
        std::copy_n(x.value().data() + x.value().index(n, c, h, begin), os.w,
                    out.data() + out.index(n, c, h, 0));
  return make_result(std::move(out), {x}, [os, begin](Node& self) {
    Node& xn = *self.inputs[0];
    float* dx = xn.grad_buffer().data();
    for (int n = 0; n < os.n; ++n)
      for (int c = 0; c < os.c; ++c)
        for (int h = 0; h < os.h; ++h) {
          const float* src = self.grad.data() + self.grad.index(n, c, h, 0);
          float* dst = dx + xn.value.index(n, c, h, begin);
          for (int w = 0; w < os.w; ++w) dst[w] += src[w];
        }
  });
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out.data()[i] = a.value().data()[i] + b.value().data()[i];
  }
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (auto& in : self.inputs) {
      if (!wants_grad(*in)) continue;
      float* d = in->grad_buffer().data();
      for (std::size_t i = 0; i < self.grad.numel(); ++i) d[i] += self.grad.data()[i];
    }
  });
}

Var scale(const Var& x, float factor) {
  return make_result(unary(x, [factor](float v) { return v * factor; }), {x}, [factor](Node& self) {
    float* d = self.inputs[0]->grad_buffer().data();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) d[i] += self.grad.data()[i] * factor;
  });
}

Var mean_abs_diff(const Var& a, const Var& b) {
  check_same_shape(a, b, "mean_abs_diff");
  const std::size_t count = a.value().numel();
  double sum = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    sum += std::abs(static_cast<double>(a.value().data()[i]) - b.value().data()[i]);
  }
  Tensor out(Shape{}, static_cast<float>(sum / count));
  return make_result(std::move(out), {a, b}, [count](Node& self) {
    const float g = self.grad.item() / static_cast<float>(count);
    const float* av = self.inputs[0]->value.data();
    const float* bv = self.inputs[1]->value.data();
    for (int k = 0; k < 2; ++k) {
      Node& in = *self.inputs[k];
      if (!wants_grad(in)) continue;
      const float sign = k == 0 ? 1.0f : -1.0f;
      float* d = in.grad_buffer().data();
      for (std::size_t i = 0; i < count; ++i) {
        const float diff = av[i] - bv[i];
        const float s = diff > 0.0f ? 1.0f : (diff < 0.0f ? -1.0f : 0.0f);
        d[i] += sign * s * g;
      }
    }
  });
}

Var mean_squared_diff(const Var& a, const Var& b) {
  check_same_shape(a, b, "mean_squared_diff");
  const std::size_t count = a.value().numel();
  double sum = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double d = static_cast<double>(a.value().data()[i]) - b.value().data()[i];
    sum += d * d;
  }
  Tensor out(Shape{}, static_cast<float>(sum / count));
  return make_result(std::move(out), {a, b}, [count](Node& self) {
    const float g = 2.0f * self.grad.item() / static_cast<float>(count);
    const float* av = self.inputs[0]->value.data();
    const float* bv = self.inputs[1]->value.data();
    for (int k = 0; k < 2; ++k) {
      Node& in = *self.inputs[k];
      if (!wants_grad(in)) continue;
      const float sign = k == 0 ? 1.0f : -1.0f;
      float* d = in.grad_buffer().data();
      for (std::size_t i = 0; i < count; ++i) d[i] += sign * g * (av[i] - bv[i]);
    }
  });
}

Var mean_squared_to_constant(const Var& x, float target) {
  const std::size_t count = x.value().numel();
  double sum = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double d = static_cast<double>(x.value().data()[i]) - target;
    sum += d * d;
  }
  Tensor out(Shape{}, static_cast<float>(sum / count));
  return make_result(std::move(out), {x}, [count, target](Node& self) {
    const float g = 2.0f * self.grad.item() / static_cast<float>(count);
    Node& in = *self.inputs[0];
    float* d = in.grad_buffer().data();
    for (std::size_t i = 0; i < count; ++i) d[i] += g * (in.value.data()[i] - target);
  });
}

}  // namespace melfill::nn
