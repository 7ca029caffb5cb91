#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "wavediff/errors.hpp"

namespace wavediff::nn {

// ============================================================================
// Minimal reverse-mode automatic differentiation for the denoiser.
//
// A Tape owns Nodes in creation order, which is already a topological order,
// so backward() is a single reverse sweep. Backprop closures hold raw Node
// pointers; the tape keeps every node alive until reset(). All loops are
// written so the innermost index is contiguous — the conv kernels below are
// the training hot path and must auto-vectorize.
// ============================================================================

struct Tensor {
  std::vector<std::size_t> dims;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> d) : dims(std::move(d)) {
    v.assign(numel_of(dims), 0.0);
  }
  Tensor(std::vector<std::size_t> d, std::vector<double> values)
      : dims(std::move(d)), v(std::move(values)) {
    require(v.size() == numel_of(dims), "tensor: value count does not match dims");
  }

  static std::size_t numel_of(const std::vector<std::size_t>& d) {
    return std::accumulate(d.begin(), d.end(), std::size_t{1},
                           [](std::size_t a, std::size_t b) { return a * b; });
  }

  [[nodiscard]] std::size_t numel() const { return v.size(); }
  double& operator[](std::size_t i) { return v[i]; }
  double operator[](std::size_t i) const { return v[i]; }
  [[nodiscard]] bool same_dims(const Tensor& o) const { return dims == o.dims; }
};

struct Node {
  Tensor val;
  Tensor grad;  // allocated with val's shape at creation, zero-filled
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;  // liveness only
  std::function<void()> backprop;             // accumulates into input grads
};

using NodePtr = std::shared_ptr<Node>;

class Tape {
 public:
  /// Leaf value (network input or parameter).
  NodePtr leaf(Tensor val, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->grad = Tensor(val.dims);
    n->val = std::move(val);
    n->requires_grad = requires_grad;
    order_.push_back(n);
    return n;
  }

  /// Operation result; `backprop` must add into the grad buffers of those
  /// inputs that require gradients and must leave the others untouched.
  NodePtr op(Tensor val, std::vector<NodePtr> inputs, std::function<void()> backprop) {
    auto n = std::make_shared<Node>();
    n->grad = Tensor(val.dims);
    n->val = std::move(val);
    n->inputs = std::move(inputs);
    n->backprop = std::move(backprop);
    for (const auto& in : n->inputs) n->requires_grad |= in->requires_grad;
    order_.push_back(n);
    return n;
  }

  /// Reverse sweep from a scalar loss node.
  void backward(const NodePtr& loss) {
    require(loss->val.numel() == 1, "backward: loss must be scalar");
    loss->grad.v[0] = 1.0;
    for (std::size_t i = order_.size(); i-- > 0;) {
      Node& n = *order_[i];
      if (n.backprop && n.requires_grad) n.backprop();
    }
  }

  [[nodiscard]] std::size_t size() const { return order_.size(); }
  void reset() { order_.clear(); }

 private:
  std::vector<NodePtr> order_;
};

// ----------------------------------------------------------------------------
// Elementwise and shape ops
// ----------------------------------------------------------------------------

inline NodePtr add(Tape& tape, const NodePtr& a, const NodePtr& b) {
  require(a->val.same_dims(b->val), "add: shape mismatch");
  Tensor out(a->val.dims);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->val[i] + b->val[i];
  Node *pa = a.get(), *pb = b.get();
  NodePtr n = tape.op(std::move(out), {a, b}, nullptr);
  Node* pn = n.get();
  n->backprop = [pa, pb, pn]() {
    if (pa->requires_grad)
      for (std::size_t i = 0; i < pn->grad.numel(); ++i) pa->grad[i] += pn->grad[i];
    if (pb->requires_grad)
      for (std::size_t i = 0; i < pn->grad.numel(); ++i) pb->grad[i] += pn->grad[i];
  };
  return n;
}

inline NodePtr silu(Tape& tape, const NodePtr& x) {
  Tensor out(x->val.dims);
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-x->val[i]));
    out[i] = x->val[i] * s;
  }
  Node* px = x.get();
  NodePtr n = tape.op(std::move(out), {x}, nullptr);
  Node* pn = n.get();
  n->backprop = [px, pn]() {
    if (!px->requires_grad) return;
    for (std::size_t i = 0; i < pn->grad.numel(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-px->val[i]));
      px->grad[i] += pn->grad[i] * s * (1.0 + px->val[i] * (1.0 - s));
    }
  };
  return n;
}

inline NodePtr scale(Tape& tape, const NodePtr& x, double c) {
  Tensor out(x->val.dims);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = c * x->val[i];
  Node* px = x.get();
  NodePtr n = tape.op(std::move(out), {x}, nullptr);
  Node* pn = n.get();
  n->backprop = [px, pn, c]() {
    if (!px->requires_grad) return;
    for (std::size_t i = 0; i < pn->grad.numel(); ++i) px->grad[i] += c * pn->grad[i];
  };
  return n;
}

/// Reinterpret the value with new dims (same element count, same layout).
inline NodePtr reshape(Tape& tape, const NodePtr& x, std::vector<std::size_t> dims) {
  require(Tensor::numel_of(dims) == x->val.numel(), "reshape: element count mismatch");
  Tensor out(std::move(dims), x->val.v);
  Node* px = x.get();
  NodePtr n = tape.op(std::move(out), {x}, nullptr);
  Node* pn = n.get();
  n->backprop = [px, pn]() {
    if (!px->requires_grad) return;
    for (std::size_t i = 0; i < pn->grad.numel(); ++i) px->grad[i] += pn->grad[i];
  };
  return n;
}

/// Per-channel bias broadcast over the spatial axes of a [C,H,W] tensor.
inline NodePtr add_channel_bias(Tape& tape, const NodePtr& x, const NodePtr& bias) {
  require(x->val.dims.size() == 3, "add_channel_bias: expected [C,H,W]");
  require(bias->val.dims.size() == 1 && bias->val.dims[0] == x->val.dims[0],
          "add_channel_bias: bias length must equal channel count");
  const std::size_t C = x->val.dims[0], HW = x->val.dims[1] * x->val.dims[2];
  Tensor out(x->val.dims);
  for (std::size_t c = 0; c < C; ++c) {
    const double b = bias->val[c];
    for (std::size_t i = 0; i < HW; ++i) out[c * HW + i] = x->val[c * HW + i] + b;
  }
  Node *px = x.get(), *pb = bias.get();
  NodePtr n = tape.op(std::move(out), {x, bias}, nullptr);
  Node* pn = n.get();
  n->backprop = [px, pb, pn, C, HW]() {
    for (std::size_t c = 0; c < C; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < HW; ++i) acc += pn->grad[c * HW + i];
      if (pb->requires_grad) pb->grad[c] += acc;
      if (px->requires_grad)
        for (std::size_t i = 0; i < HW; ++i) px->grad[c * HW + i] += pn->grad[c * HW + i];
    }
  };
  return n;
}

/// Spatial mean per channel: [C,H,W] -> [C].
inline NodePtr channel_means(Tape& tape, const NodePtr& x) {
  require(x->val.dims.size() == 3, "channel_means: expected [C,H,W]");
  const std::size_t C = x->val.dims[0], HW = x->val.dims[1] * x->val.dims[2];
  Tensor out({C});
  for (std::size_t c = 0; c < C; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < HW; ++i) acc += x->val[c * HW + i];
    out[c] = acc / static_cast<double>(HW);
  }
  Node* px = x.get();
  NodePtr n = tape.op(std::move(out), {x}, nullptr);
  Node* pn = n.get();
  n->backprop = [px, pn, C, HW]() {
    if (!px->requires_grad) return;
    for (std::size_t c = 0; c < C; ++c) {
      const double g = pn->grad[c] / static_cast<double>(HW);
      for (std::size_t i = 0; i < HW; ++i) px->grad[c * HW + i] += g;
    }
  };
  return n;
}

/// Concatenate two vectors: [A] + [B] -> [A+B].
inline NodePtr concat_vec(Tape& tape, const NodePtr& a, const NodePtr& b) {
  require(a->val.dims.size() == 1 && b->val.dims.size() == 1,
          "concat_vec: expected 1-D inputs");
  Tensor out({a->val.dims[0] + b->val.dims[0]});
  std::copy(a->val.v.begin(), a->val.v.end(), out.v.begin());
  std::copy(b->val.v.begin(), b->val.v.end(), out.v.begin() + a->val.numel());
  Node *pa = a.get(), *pb = b.get();
  NodePtr n = tape.op(std::move(out), {a, b}, nullptr);
  Node* pn = n.get();
  const std::size_t na = a->val.numel();
  n->backprop = [pa, pb, pn, na]() {
    if (pa->requires_grad)
      for (std::size_t i = 0; i < na; ++i) pa->grad[i] += pn->grad[i];
    if (pb->requires_grad)
      for (std::size_t i = 0; i < pb->grad.numel(); ++i) pb->grad[i] += pn->grad[na + i];
  };
  return n;
}

inline NodePtr concat_channels(Tape& tape, const NodePtr& a, const NodePtr& b) {
  require(a->val.dims.size() == 3 && b->val.dims.size() == 3,
          "concat_channels: expected [C,H,W]");
  require(a->val.dims[1] == b->val.dims[1] && a->val.dims[2] == b->val.dims[2],
          "concat_channels: spatial dims mismatch");
  const std::size_t Ca = a->val.dims[0], Cb = b->val.dims[0];
  Tensor out({Ca + Cb, a->val.dims[1], a->val.dims[2]});
  std::copy(a->val.v.begin(), a->val.v.end(), out.v.begin());
  std::copy(b->val.v.begin(), b->val.v.end(), out.v.begin() + a->val.numel());
  Node *pa = a.get(), *pb = b.get();
  NodePtr n = tape.op(std::move(out), {a, b}, nullptr);
  Node* pn = n.get();
  const std::size_t na = a->val.numel();
  n->backprop = [pa, pb, pn, na]() {
    if (pa->requires_grad)
      for (std::size_t i = 0; i < na; ++i) pa->grad[i] += pn->grad[i];
    if (pb->requires_grad)
      for (std::size_t i = 0; i < pb->grad.numel(); ++i) pb->grad[i] += pn->grad[na + i];
  };
  return n;
}

/// Nearest-neighbor 2x upsampling cropped to (Ht, Wt); Ht must be 2H or 2H-1
/// (same for W) so decoder stages can meet odd-sized encoder skips exactly.
inline NodePtr upsample_nearest2x(Tape& tape, const NodePtr& x, std::size_t Ht,
                                  std::size_t Wt) {
  require(x->val.dims.size() == 3, "upsample_nearest2x: expected [C,H,W]");
  const std::size_t C = x->val.dims[0], H = x->val.dims[1], W = x->val.dims[2];
  require(Ht == 2 * H || Ht + 1 == 2 * H, "upsample_nearest2x: bad target height");
  require(Wt == 2 * W || Wt + 1 == 2 * W, "upsample_nearest2x: bad target width");
  Tensor out({C, Ht, Wt});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < Ht; ++y) {
      const double* src = &x->val[(c * H + y / 2) * W];
      double* dst = &out[(c * Ht + y) * Wt];
      for (std::size_t xw = 0; xw < Wt; ++xw) dst[xw] = src[xw / 2];
    }
  Node* px = x.get();
  NodePtr n = tape.op(std::move(out), {x}, nullptr);
  Node* pn = n.get();
  n->backprop = [px, pn, C, H, W, Ht, Wt]() {
    if (!px->requires_grad) return;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < Ht; ++y) {
        double* dst = &px->grad[(c * H + y / 2) * W];
        const double* g = &pn->grad[(c * Ht + y) * Wt];
        for (std::size_t xw = 0; xw < Wt; ++xw) dst[xw / 2] += g[xw];
      }
  };
  return n;
}

// ----------------------------------------------------------------------------
// Dense and convolutional ops
// ----------------------------------------------------------------------------

/// y = W x + b with W [M,N], x [N], b [M].
inline NodePtr linear(Tape& tape, const NodePtr& x, const NodePtr& w, const NodePtr& b) {
  require(x->val.dims.size() == 1 && w->val.dims.size() == 2 && b->val.dims.size() == 1,
          "linear: expected x[N], w[M,N], b[M]");
  const std::size_t N = x->val.dims[0], M = w->val.dims[0];
  require(w->val.dims[1] == N && b->val.dims[0] == M, "linear: shape mismatch");
  Tensor out({M});
  for (std::size_t m = 0; m < M; ++m) {
    double acc = b->val[m];
    const double* row = &w->val[m * N];
    for (std::size_t i = 0; i < N; ++i) acc += row[i] * x->val[i];
    out[m] = acc;
  }
  Node *px = x.get(), *pw = w.get(), *pb = b.get();
  NodePtr n = tape.op(std::move(out), {x, w, b}, nullptr);
  Node* pn = n.get();
  n->backprop = [px, pw, pb, pn, M, N]() {
    for (std::size_t m = 0; m < M; ++m) {
      const double g = pn->grad[m];
      if (g == 0.0) continue;
      if (pb->requires_grad) pb->grad[m] += g;
      if (pw->requires_grad) {
        double* gw = &pw->grad[m * N];
        for (std::size_t i = 0; i < N; ++i) gw[i] += g * px->val[i];
      }
      if (px->requires_grad) {
        const double* row = &pw->val[m * N];
        for (std::size_t i = 0; i < N; ++i) px->grad[i] += g * row[i];
      }
    }
  };
  return n;
}

/// 2-D convolution: x [Cin,H,W], w [Cout,Cin,k,k], b [Cout], square kernel,
/// symmetric zero padding. Output spatial size (N + 2 pad - k)/stride + 1.
inline NodePtr conv2d(Tape& tape, const NodePtr& x, const NodePtr& w, const NodePtr& b,
                      std::size_t stride = 1, std::size_t pad = 1) {
  require(x->val.dims.size() == 3 && w->val.dims.size() == 4 && b->val.dims.size() == 1,
          "conv2d: expected x[C,H,W], w[Co,Ci,k,k], b[Co]");
  const std::size_t Ci = x->val.dims[0], H = x->val.dims[1], W = x->val.dims[2];
  const std::size_t Co = w->val.dims[0], k = w->val.dims[2];
  require(w->val.dims[1] == Ci && w->val.dims[3] == k, "conv2d: weight shape mismatch");
  require(b->val.dims[0] == Co, "conv2d: bias shape mismatch");
  require(stride >= 1 && H + 2 * pad >= k && W + 2 * pad >= k, "conv2d: kernel exceeds input");
  const std::size_t Ho = (H + 2 * pad - k) / stride + 1;
  const std::size_t Wo = (W + 2 * pad - k) / stride + 1;

  Tensor out({Co, Ho, Wo});
  for (std::size_t co = 0; co < Co; ++co) {
    double* oc = &out[co * Ho * Wo];
    const double bv = b->val[co];
    for (std::size_t i = 0; i < Ho * Wo; ++i) oc[i] = bv;
    for (std::size_t ci = 0; ci < Ci; ++ci) {
      const double* ic = &x->val[ci * H * W];
      const double* wc = &w->val[(co * Ci + ci) * k * k];
      for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx) {
          const double wv = wc[ky * k + kx];
          if (wv == 0.0) continue;
          for (std::size_t oy = 0; oy < Ho; ++oy) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
            const double* irow = ic + static_cast<std::size_t>(iy) * W;
            double* orow = oc + oy * Wo;
            // Valid output columns: 0 <= ox*stride + kx - pad < W.
            std::size_t x0 = 0;
            while (x0 < Wo && static_cast<std::ptrdiff_t>(x0 * stride + kx) <
                                  static_cast<std::ptrdiff_t>(pad))
              ++x0;
            for (std::size_t ox = x0; ox < Wo; ++ox) {
              const std::size_t ix = ox * stride + kx - pad;
              if (ix >= W) break;
              orow[ox] += wv * irow[ix];
            }
          }
        }
    }
  }

  Node *px = x.get(), *pw = w.get(), *pb = b.get();
  NodePtr n = tape.op(std::move(out), {x, w, b}, nullptr);
  Node* pn = n.get();
  n->backprop = [px, pw, pb, pn, Ci, H, W, Co, k, stride, pad, Ho, Wo]() {
    const bool need_x = px->requires_grad, need_w = pw->requires_grad;
    for (std::size_t co = 0; co < Co; ++co) {
      const double* gc = &pn->grad[co * Ho * Wo];
      if (pb->requires_grad) {
        double acc_b = 0.0;
        for (std::size_t i = 0; i < Ho * Wo; ++i) acc_b += gc[i];
        pb->grad[co] += acc_b;
      }
      if (!need_x && !need_w) continue;
      for (std::size_t ci = 0; ci < Ci; ++ci) {
        const double* ic = &px->val[ci * H * W];
        double* gic = &px->grad[ci * H * W];
        const double* wc = &pw->val[(co * Ci + ci) * k * k];
        double* gwc = &pw->grad[(co * Ci + ci) * k * k];
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx) {
            const double wv = wc[ky * k + kx];
            double acc_w = 0.0;
            for (std::size_t oy = 0; oy < Ho; ++oy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                        static_cast<std::ptrdiff_t>(pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
              const double* irow = ic + static_cast<std::size_t>(iy) * W;
              double* girow = gic + static_cast<std::size_t>(iy) * W;
              const double* grow = gc + oy * Wo;
              std::size_t x0 = 0;
              while (x0 < Wo && static_cast<std::ptrdiff_t>(x0 * stride + kx) <
                                    static_cast<std::ptrdiff_t>(pad))
                ++x0;
              if (need_x && need_w) {
                for (std::size_t ox = x0; ox < Wo; ++ox) {
                  const std::size_t ix = ox * stride + kx - pad;
                  if (ix >= W) break;
                  acc_w += grow[ox] * irow[ix];
                  girow[ix] += grow[ox] * wv;
                }
              } else if (need_w) {
                for (std::size_t ox = x0; ox < Wo; ++ox) {
                  const std::size_t ix = ox * stride + kx - pad;
                  if (ix >= W) break;
                  acc_w += grow[ox] * irow[ix];
                }
              } else {
                for (std::size_t ox = x0; ox < Wo; ++ox) {
                  const std::size_t ix = ox * stride + kx - pad;
                  if (ix >= W) break;
                  girow[ix] += grow[ox] * wv;
                }
              }
            }
            if (need_w) gwc[ky * k + kx] += acc_w;
          }
      }
    }
  };
  return n;
}

/// Group normalization over a [C,H,W] tensor with per-channel affine params.
inline NodePtr group_norm(Tape& tape, const NodePtr& x, const NodePtr& gamma,
                          const NodePtr& beta, std::size_t groups, double eps = 1e-5) {
  require(x->val.dims.size() == 3, "group_norm: expected [C,H,W]");
  const std::size_t C = x->val.dims[0], HW = x->val.dims[1] * x->val.dims[2];
  require(groups >= 1 && C % groups == 0, "group_norm: channels must divide into groups");
  require(gamma->val.dims == std::vector<std::size_t>{C} &&
              beta->val.dims == std::vector<std::size_t>{C},
          "group_norm: affine parameter shape mismatch");
  const std::size_t cpg = C / groups, m = cpg * HW;

  std::vector<double> mu(groups), inv(groups);
  Tensor out(x->val.dims);
  for (std::size_t g = 0; g < groups; ++g) {
    const double* base = &x->val[g * m];
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      s += base[i];
      s2 += base[i] * base[i];
    }
    const double mean = s / static_cast<double>(m);
    const double var = s2 / static_cast<double>(m) - mean * mean;
    mu[g] = mean;
    inv[g] = 1.0 / std::sqrt(var + eps);
    for (std::size_t cc = 0; cc < cpg; ++cc) {
      const std::size_t c = g * cpg + cc;
      const double a = gamma->val[c] * inv[g];
      const double sh = beta->val[c] - a * mean;
      const double* row = &x->val[c * HW];
      double* orow = &out[c * HW];
      for (std::size_t i = 0; i < HW; ++i) orow[i] = a * row[i] + sh;
    }
  }

  Node *px = x.get(), *pg = gamma.get(), *pbta = beta.get();
  NodePtr n = tape.op(std::move(out), {x, gamma, beta}, nullptr);
  Node* pn = n.get();
  n->backprop = [px, pg, pbta, pn, groups, cpg, HW, m, mu, inv]() {
    for (std::size_t g = 0; g < groups; ++g) {
      // dxhat = dout * gamma; dx = inv*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
      double sum_dxh = 0.0, sum_dxh_xh = 0.0;
      for (std::size_t cc = 0; cc < cpg; ++cc) {
        const std::size_t c = g * cpg + cc;
        const double* row = &px->val[c * HW];
        const double* grow = &pn->grad[c * HW];
        double dgamma = 0.0, dbeta = 0.0;
        for (std::size_t i = 0; i < HW; ++i) {
          const double xhat = (row[i] - mu[g]) * inv[g];
          dgamma += grow[i] * xhat;
          dbeta += grow[i];
          const double dxh = grow[i] * pg->val[c];
          sum_dxh += dxh;
          sum_dxh_xh += dxh * xhat;
        }
        if (pg->requires_grad) pg->grad[c] += dgamma;
        if (pbta->requires_grad) pbta->grad[c] += dbeta;
      }
      if (!px->requires_grad) continue;
      const double mean_dxh = sum_dxh / static_cast<double>(m);
      const double mean_dxh_xh = sum_dxh_xh / static_cast<double>(m);
      for (std::size_t cc = 0; cc < cpg; ++cc) {
        const std::size_t c = g * cpg + cc;
        const double* row = &px->val[c * HW];
        const double* grow = &pn->grad[c * HW];
        double* gx = &px->grad[c * HW];
        const double gam = pg->val[c];
        for (std::size_t i = 0; i < HW; ++i) {
          const double xhat = (row[i] - mu[g]) * inv[g];
          gx[i] += inv[g] * (grow[i] * gam - mean_dxh - xhat * mean_dxh_xh);
        }
      }
    }
  };
  return n;
}

// ----------------------------------------------------------------------------
// Attention building blocks (position-flattened matrix products)
// ----------------------------------------------------------------------------

/// scores = a^T b for a [C,N], b [C,M] -> [N,M].
inline NodePtr matmul_tn(Tape& tape, const NodePtr& a, const NodePtr& b) {
  require(a->val.dims.size() == 2 && b->val.dims.size() == 2 &&
              a->val.dims[0] == b->val.dims[0],
          "matmul_tn: expected a[C,N], b[C,M]");
  const std::size_t C = a->val.dims[0], N = a->val.dims[1], M = b->val.dims[1];
  Tensor out({N, M});
  for (std::size_t c = 0; c < C; ++c) {
    const double* ar = &a->val[c * N];
    const double* br = &b->val[c * M];
    for (std::size_t i = 0; i < N; ++i) {
      const double av = ar[i];
      double* orow = &out[i * M];
      for (std::size_t j = 0; j < M; ++j) orow[j] += av * br[j];
    }
  }
  Node *pa = a.get(), *pb = b.get();
  NodePtr n = tape.op(std::move(out), {a, b}, nullptr);
  Node* pn = n.get();
  n->backprop = [pa, pb, pn, C, N, M]() {
    const bool na = pa->requires_grad, nb = pb->requires_grad;
    for (std::size_t c = 0; c < C; ++c) {
      const double* ar = &pa->val[c * N];
      const double* br = &pb->val[c * M];
      double* gar = &pa->grad[c * N];
      double* gbr = &pb->grad[c * M];
      for (std::size_t i = 0; i < N; ++i) {
        const double* grow = &pn->grad[i * M];
        if (na) {
          double acc = 0.0;
          for (std::size_t j = 0; j < M; ++j) acc += grow[j] * br[j];
          gar[i] += acc;
        }
        if (nb) {
          const double av = ar[i];
          for (std::size_t j = 0; j < M; ++j) gbr[j] += grow[j] * av;
        }
      }
    }
  };
  return n;
}

/// out = v attn^T for v [C,M], attn [N,M] -> [C,N] (attention-weighted values).
inline NodePtr matmul_nt(Tape& tape, const NodePtr& v, const NodePtr& attn) {
  require(v->val.dims.size() == 2 && attn->val.dims.size() == 2 &&
              v->val.dims[1] == attn->val.dims[1],
          "matmul_nt: expected v[C,M], attn[N,M]");
  const std::size_t C = v->val.dims[0], M = v->val.dims[1], N = attn->val.dims[0];
  Tensor out({C, N});
  for (std::size_t c = 0; c < C; ++c) {
    const double* vr = &v->val[c * M];
    for (std::size_t i = 0; i < N; ++i) {
      const double* ar = &attn->val[i * M];
      double acc = 0.0;
      for (std::size_t j = 0; j < M; ++j) acc += vr[j] * ar[j];
      out[c * N + i] = acc;
    }
  }
  Node *pv = v.get(), *pat = attn.get();
  NodePtr n = tape.op(std::move(out), {v, attn}, nullptr);
  Node* pn = n.get();
  n->backprop = [pv, pat, pn, C, M, N]() {
    const bool nv = pv->requires_grad, na = pat->requires_grad;
    for (std::size_t c = 0; c < C; ++c) {
      const double* vr = &pv->val[c * M];
      double* gvr = &pv->grad[c * M];
      for (std::size_t i = 0; i < N; ++i) {
        const double g = pn->grad[c * N + i];
        if (g == 0.0) continue;
        const double* ar = &pat->val[i * M];
        double* gar = &pat->grad[i * M];
        if (nv)
          for (std::size_t j = 0; j < M; ++j) gvr[j] += g * ar[j];
        if (na)
          for (std::size_t j = 0; j < M; ++j) gar[j] += g * vr[j];
      }
    }
  };
  return n;
}

/// Row-wise softmax of a [N,M] tensor.
inline NodePtr softmax_rows(Tape& tape, const NodePtr& x) {
  require(x->val.dims.size() == 2, "softmax_rows: expected [N,M]");
  const std::size_t N = x->val.dims[0], M = x->val.dims[1];
  Tensor out(x->val.dims);
  for (std::size_t i = 0; i < N; ++i) {
    const double* row = &x->val[i * M];
    double* orow = &out[i * M];
    double mx = row[0];
    for (std::size_t j = 1; j < M; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < M; ++j) {
      orow[j] = std::exp(row[j] - mx);
      z += orow[j];
    }
    const double invz = 1.0 / z;
    for (std::size_t j = 0; j < M; ++j) orow[j] *= invz;
  }
  Node* px = x.get();
  NodePtr n = tape.op(std::move(out), {x}, nullptr);
  Node* pn = n.get();
  n->backprop = [px, pn, N, M]() {
    if (!px->requires_grad) return;
    for (std::size_t i = 0; i < N; ++i) {
      const double* a = &pn->val[i * M];
      const double* g = &pn->grad[i * M];
      double dot = 0.0;
      for (std::size_t j = 0; j < M; ++j) dot += a[j] * g[j];
      double* gx = &px->grad[i * M];
      for (std::size_t j = 0; j < M; ++j) gx[j] += a[j] * (g[j] - dot);
    }
  };
  return n;
}

// ----------------------------------------------------------------------------
// Losses
// ----------------------------------------------------------------------------

/// Scalar sum of squared differences against a constant target.
inline NodePtr sum_squared_diff(Tape& tape, const NodePtr& x, const Tensor& target) {
  require(x->val.same_dims(target), "sum_squared_diff: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < target.numel(); ++i) {
    const double d = x->val[i] - target[i];
    acc += d * d;
  }
  Tensor out({1});
  out[0] = acc;
  Node* px = x.get();
  NodePtr n = tape.op(std::move(out), {x}, nullptr);
  Node* pn = n.get();
  Tensor tgt = target;  // keep alive in the closure
  n->backprop = [px, pn, tgt = std::move(tgt)]() {
    if (!px->requires_grad) return;
    const double g = pn->grad[0];
    for (std::size_t i = 0; i < tgt.numel(); ++i)
      px->grad[i] += g * 2.0 * (px->val[i] - tgt[i]);
  };
  return n;
}

/// Scalar sum of all elements.
inline NodePtr sum_all(Tape& tape, const NodePtr& x) {
  Tensor out({1});
  for (std::size_t i = 0; i < x->val.numel(); ++i) out[0] += x->val[i];
  Node* px = x.get();
  NodePtr n = tape.op(std::move(out), {x}, nullptr);
  Node* pn = n.get();
  n->backprop = [px, pn]() {
    if (!px->requires_grad) return;
    const double g = pn->grad[0];
    for (std::size_t i = 0; i < px->grad.numel(); ++i) px->grad[i] += g;
  };
  return n;
}

}  // namespace wavediff::nn
