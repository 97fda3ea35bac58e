#pragma once

// Reverse-mode automatic differentiation over NCHW tensors.
//
// A Var is a handle to a graph node. Ops record a backward closure only when
// at least one input requires a gradient and recording is enabled, so
// inference under NoGradGuard builds no graph.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "synthmix/tensor.hpp"

namespace synthmix::ag {

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Tensor<T>&)> backward;

  Tensor<T>& grad_ref() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

namespace detail {
using synthmix::detail::require;

inline bool& grad_enabled() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

/// Disables graph recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled()) { detail::grad_enabled() = false; }
  ~NoGradGuard() { detail::grad_enabled() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <class T>
class Var {
 public:
  Var() = default;

  static Var constant(Tensor<T> v) {
    Var out;
    out.node_ = std::make_shared<Node<T>>();
    out.node_->value = std::move(v);
    return out;
  }

  static Var parameter(Tensor<T> v) {
    Var out = constant(std::move(v));
    out.node_->requires_grad = true;
    return out;
  }

  [[nodiscard]] const Tensor<T>& value() const { return node_->value; }
  /// Direct write access, used by optimizers and checkpoint loading.
  [[nodiscard]] Tensor<T>& mutable_value() { return node_->value; }
  [[nodiscard]] const Tensor<T>& grad() const { return node_->grad; }
  [[nodiscard]] bool has_grad() const { return !node_->grad.empty(); }
  [[nodiscard]] bool requires_grad() const { return node_ && node_->requires_grad; }
  [[nodiscard]] const Shape& shape() const { return node_->value.shape(); }
  [[nodiscard]] T item() const { return node_->value.item(); }
  [[nodiscard]] Node<T>* node() const noexcept { return node_.get(); }
  [[nodiscard]] const std::shared_ptr<Node<T>>& shared() const noexcept { return node_; }
  explicit operator bool() const noexcept { return static_cast<bool>(node_); }

  void zero_grad() { node_->grad = Tensor<T>(); }
  [[nodiscard]] Var detach() const { return constant(node_->value); }

  /// Builds an op result. `bw` receives the output gradient and must
  /// accumulate into the parents that require gradients.
  template <class F>
  static Var make(Tensor<T> value, std::initializer_list<Var> parents, F&& bw) {
    Var out = constant(std::move(value));
    if (!detail::grad_enabled()) return out;
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    // Every input stays alive while the closure may read it; traversal
    // follows only those that need gradients.
    for (const auto& p : parents) out.node_->parents.push_back(p.node_);
    out.node_->backward = std::forward<F>(bw);
    return out;
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Accumulates d(root)/d(leaf) into every reachable leaf that requires grad.
template <class T>
void backward(const Var<T>& root) {
  detail::require<DimensionError>(root.value().size() == 1, "backward() needs a scalar root");
  if (!root.requires_grad()) return;
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node(), 0}};
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<T>* p = node->parents[idx++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->grad_ref().fill(T{1});
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(n->grad);
  }
  // Free intermediate gradients; leaves keep theirs.
  for (Node<T>* n : order) {
    if (n->backward) n->grad = Tensor<T>();
  }
}

// ---------------------------------------------------------------------------
// Elementwise ops

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor<T> out = a.value();
  out += b.value();
  auto* na = a.node();
  auto* nb = b.node();
  return Var<T>::make(std::move(out), {a, b}, [na, nb](const Tensor<T>& g) {
    if (na->requires_grad) na->grad_ref() += g;
    if (nb->requires_grad) nb->grad_ref() += g;
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  auto* na = a.node();
  auto* nb = b.node();
  return Var<T>::make(std::move(out), {a, b}, [na, nb](const Tensor<T>& g) {
    if (na->requires_grad) na->grad_ref() += g;
    if (nb->requires_grad) {
      auto& gb = nb->grad_ref();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.vec()) v *= s;
  auto* na = a.node();
  return Var<T>::make(std::move(out), {a}, [na, s](const Tensor<T>& g) {
    auto& ga = na->grad_ref();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

template <class T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) {
  return add(a, b);
}
template <class T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) {
  return sub(a, b);
}
template <class T>
Var<T> operator*(T s, const Var<T>& a) {
  return scale(a, s);
}

template <class T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  Tensor<T> out = a.value();
  for (auto& v : out.vec()) v = v > T{0} ? v : slope * v;
  auto* na = a.node();
  return Var<T>::make(std::move(out), {a}, [na, slope](const Tensor<T>& g) {
    auto& ga = na->grad_ref();
    const auto& x = na->value;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += x[i] > T{0} ? g[i] : slope * g[i];
  });
}

template <class T>
Var<T> tanh(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.vec()) v = std::tanh(v);
  auto y = std::make_shared<Tensor<T>>(out);
  auto* na = a.node();
  return Var<T>::make(std::move(out), {a}, [na, y](const Tensor<T>& g) {
    auto& ga = na->grad_ref();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += (T{1} - (*y)[i] * (*y)[i]) * g[i];
  });
}

/// Hard clamp to [lo, hi]; zero gradient where the clamp is active.
template <class T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  Tensor<T> out = a.value();
  for (auto& v : out.vec()) v = std::clamp(v, lo, hi);
  auto* na = a.node();
  return Var<T>::make(std::move(out), {a}, [na, lo, hi](const Tensor<T>& g) {
    auto& ga = na->grad_ref();
    const auto& x = na->value;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] >= lo && x[i] <= hi) ga[i] += g[i];
    }
  });
}

/// out = M*a + (1-M)*b with M broadcast over channels. M is [N|1,1,H,W].
template <class T>
Var<T> mask_mix(const Tensor<T>& mask, const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.value(), b.value(), "mask_mix");
  const Shape s = a.shape();
  detail::require<DimensionError>(
      mask.shape().c == 1 && mask.shape().h == s.h && mask.shape().w == s.w &&
          (mask.shape().n == 1 || mask.shape().n == s.n),
      "mask_mix: mask " + mask.shape().str() + " incompatible with " + s.str());
  auto m = std::make_shared<Tensor<T>>(mask);
  const std::size_t plane = s.plane();
  auto mask_at = [m, plane, s](std::size_t i) {
    const std::size_t n = i / (static_cast<std::size_t>(s.c) * plane);
    const std::size_t p = i % plane;
    return (*m)[(m->shape().n == 1 ? 0 : n) * plane + p];
  };
  Tensor<T> out(s);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T mv = mask_at(i);
    // Binary entries select exactly, so the result bit-matches a plain copy.
    if (mv == T{1}) {
      out[i] = a.value()[i];
    } else if (mv == T{0}) {
      out[i] = b.value()[i];
    } else {
      out[i] = mv * a.value()[i] + (T{1} - mv) * b.value()[i];
    }
  }
  auto* na = a.node();
  auto* nb = b.node();
  return Var<T>::make(std::move(out), {a, b}, [na, nb, mask_at](const Tensor<T>& g) {
    if (na->requires_grad) {
      auto& ga = na->grad_ref();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += mask_at(i) * g[i];
    }
    if (nb->requires_grad) {
      auto& gb = nb->grad_ref();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += (T{1} - mask_at(i)) * g[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Convolution

namespace detail {

template <class T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeom {
  int channels, h, w, kh, kw, stride, pad, out_h, out_w;
};

// Output columns [lo, hi) whose input column ox*stride - pad + j is in range.
inline std::pair<int, int> valid_range(int j, const ConvGeom& g) {
  int lo = g.pad - j;
  lo = lo <= 0 ? 0 : (lo + g.stride - 1) / g.stride;
  int hi = (g.w - 1 + g.pad - j);
  hi = hi < 0 ? 0 : hi / g.stride + 1;
  return {std::min(lo, g.out_w), std::min(std::max(hi, lo), g.out_w)};
}

template <class T>
void im2col(const T* img, const ConvGeom& g, T* col) {
  const int out_plane = g.out_h * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    const T* src = img + static_cast<std::size_t>(c) * g.h * g.w;
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        T* dst = col + (static_cast<std::size_t>(c * g.kh + i) * g.kw + j) * out_plane;
        const auto [lo, hi] = valid_range(j, g);
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int y = oy * g.stride - g.pad + i;
          T* row = dst + static_cast<std::size_t>(oy) * g.out_w;
          if (y < 0 || y >= g.h) {
            std::fill(row, row + g.out_w, T{0});
            continue;
          }
          const T* srow = src + static_cast<std::size_t>(y) * g.w - g.pad + j;
          std::fill(row, row + lo, T{0});
          if (g.stride == 1) {
            std::copy(srow + lo, srow + hi, row + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) row[ox] = srow[ox * g.stride];
          }
          std::fill(row + hi, row + g.out_w, T{0});
        }
      }
    }
  }
}

template <class T>
void col2im(const T* col, const ConvGeom& g, T* img) {
  const int out_plane = g.out_h * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    T* dst = img + static_cast<std::size_t>(c) * g.h * g.w;
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        const T* src = col + (static_cast<std::size_t>(c * g.kh + i) * g.kw + j) * out_plane;
        const auto [lo, hi] = valid_range(j, g);
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int y = oy * g.stride - g.pad + i;
          if (y < 0 || y >= g.h) continue;
          const T* srow = src + static_cast<std::size_t>(oy) * g.out_w;
          T* drow = dst + static_cast<std::size_t>(y) * g.w - g.pad + j;
          if (g.stride == 1) {
            for (int ox = lo; ox < hi; ++ox) drow[ox] += srow[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) drow[ox * g.stride] += srow[ox];
          }
        }
      }
    }
  }
}

inline bool is_pointwise(const ConvGeom& g) { return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0; }

// Per-thread column buffer, grown on demand and never zeroed; every caller
// overwrites the prefix it uses before reading it.
template <class T>
T* scratch(std::size_t n) {
  thread_local std::unique_ptr<T[]> buf;
  thread_local std::size_t cap = 0;
  if (n > cap) {
    buf.reset(new T[n]);
    cap = n;
  }
  return buf.get();
}

}  // namespace detail

/// 2D cross-correlation. x: [N,Cin,H,W], w: [Cout,Cin,kh,kw], b: [1,Cout,1,1].
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
  using Mat = detail::MatR<T>;
  const Shape xs = x.shape();
  const Shape ws = w.shape();
  detail::require<DimensionError>(xs.c == ws.c, "conv2d: input has " + std::to_string(xs.c) +
                                                    " channels, weight expects " + std::to_string(ws.c));
  detail::require<DimensionError>(b.value().size() == static_cast<std::size_t>(ws.n), "conv2d: bias size");
  const int out_h = (xs.h + 2 * pad - ws.h) / stride + 1;
  const int out_w = (xs.w + 2 * pad - ws.w) / stride + 1;
  detail::require<DimensionError>(out_h > 0 && out_w > 0, "conv2d: input " + xs.str() + " too small");
  const detail::ConvGeom geom{xs.c, xs.h, xs.w, ws.h, ws.w, stride, pad, out_h, out_w};
  const int k = ws.c * ws.h * ws.w;
  const int p = out_h * out_w;
  const bool pointwise = detail::is_pointwise(geom);
  const bool keep_cols = detail::grad_enabled() && (w.requires_grad() || x.requires_grad()) && !pointwise;

  Tensor<T> out({xs.n, ws.n, out_h, out_w});
  std::shared_ptr<T[]> cols;
  if (keep_cols) cols.reset(new T[static_cast<std::size_t>(xs.n) * k * p]);
  Eigen::Map<const Mat> wm(w.value().data(), ws.n, k);
  const auto* bias = b.value().data();
  for (int n = 0; n < xs.n; ++n) {
    const T* xin = x.value().data() + static_cast<std::size_t>(n) * xs.c * xs.plane();
    const T* colp = xin;
    if (!pointwise) {
      T* dst = keep_cols ? cols.get() + static_cast<std::size_t>(n) * k * p
                         : detail::scratch<T>(static_cast<std::size_t>(k) * p);
      detail::im2col(xin, geom, dst);
      colp = dst;
    }
    Eigen::Map<const Mat> cm(colp, k, p);
    Eigen::Map<Mat> ym(out.data() + static_cast<std::size_t>(n) * ws.n * p, ws.n, p);
    ym.noalias() = wm * cm;
    for (int o = 0; o < ws.n; ++o) ym.row(o).array() += bias[o];
  }

  auto* nx = x.node();
  auto* nw = w.node();
  auto* nb = b.node();
  return Var<T>::make(std::move(out), {x, w, b}, [=](const Tensor<T>& g) {
    Eigen::Map<const Mat> wmat(nw->value.data(), ws.n, k);
    T* dcol = pointwise ? nullptr : detail::scratch<T>(static_cast<std::size_t>(k) * p);
    for (int n = 0; n < xs.n; ++n) {
      Eigen::Map<const Mat> gm(g.data() + static_cast<std::size_t>(n) * ws.n * p, ws.n, p);
      const T* colp = pointwise ? nx->value.data() + static_cast<std::size_t>(n) * xs.c * xs.plane()
                                : cols.get() + static_cast<std::size_t>(n) * k * p;
      if (nw->requires_grad) {
        Eigen::Map<const Mat> cm(colp, k, p);
        Eigen::Map<Mat> gw(nw->grad_ref().data(), ws.n, k);
        gw.noalias() += gm * cm.transpose();
      }
      if (nb->requires_grad) {
        auto& gb = nb->grad_ref();
        for (int o = 0; o < ws.n; ++o) gb[o] += gm.row(o).sum();
      }
      if (nx->requires_grad) {
        T* gx = nx->grad_ref().data() + static_cast<std::size_t>(n) * xs.c * xs.plane();
        if (pointwise) {
          Eigen::Map<Mat> gxm(gx, k, p);
          gxm.noalias() += wmat.transpose() * gm;
        } else {
          Eigen::Map<Mat> dm(dcol, k, p);
          dm.noalias() = wmat.transpose() * gm;
          detail::col2im(dcol, geom, gx);
        }
      }
    }
  });
}

/// Transposed convolution (adjoint of conv2d). x: [N,Cin,H,W],
/// w: [Cin,Cout,kh,kw]; output side (H-1)*stride - 2*pad + kh.
template <class T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
  using Mat = detail::MatR<T>;
  const Shape xs = x.shape();
  const Shape ws = w.shape();
  detail::require<DimensionError>(xs.c == ws.n, "conv_transpose2d: channel mismatch");
  const int cout = ws.c;
  detail::require<DimensionError>(b.value().size() == static_cast<std::size_t>(cout),
                                  "conv_transpose2d: bias size");
  const int out_h = (xs.h - 1) * stride - 2 * pad + ws.h;
  const int out_w = (xs.w - 1) * stride - 2 * pad + ws.w;
  // Geometry of the forward conv that maps the output back onto the input.
  const detail::ConvGeom geom{cout, out_h, out_w, ws.h, ws.w, stride, pad, xs.h, xs.w};
  const int k = cout * ws.h * ws.w;
  const int p = xs.h * xs.w;

  Tensor<T> out({xs.n, cout, out_h, out_w});
  T* col = detail::scratch<T>(static_cast<std::size_t>(k) * p);
  Eigen::Map<const Mat> wm(w.value().data(), xs.c, k);
  for (int n = 0; n < xs.n; ++n) {
    Eigen::Map<const Mat> xm(x.value().data() + static_cast<std::size_t>(n) * xs.c * p, xs.c, p);
    Eigen::Map<Mat> cm(col, k, p);
    cm.noalias() = wm.transpose() * xm;
    T* o = out.data() + static_cast<std::size_t>(n) * cout * out_h * out_w;
    detail::col2im(col, geom, o);
    for (int c = 0; c < cout; ++c) {
      const T bv = b.value()[c];
      T* plane = o + static_cast<std::size_t>(c) * out_h * out_w;
      for (int i = 0; i < out_h * out_w; ++i) plane[i] += bv;
    }
  }

  auto* nx = x.node();
  auto* nw = w.node();
  auto* nb = b.node();
  return Var<T>::make(std::move(out), {x, w, b}, [=](const Tensor<T>& g) {
    Eigen::Map<const Mat> wmat(nw->value.data(), xs.c, k);
    T* gcol = detail::scratch<T>(static_cast<std::size_t>(k) * p);
    const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
    for (int n = 0; n < xs.n; ++n) {
      const T* gn = g.data() + static_cast<std::size_t>(n) * cout * out_plane;
      detail::im2col(gn, geom, gcol);
      Eigen::Map<const Mat> gc(gcol, k, p);
      if (nw->requires_grad) {
        Eigen::Map<const Mat> xm(nx->value.data() + static_cast<std::size_t>(n) * xs.c * p, xs.c, p);
        Eigen::Map<Mat> gw(nw->grad_ref().data(), xs.c, k);
        gw.noalias() += xm * gc.transpose();
      }
      if (nx->requires_grad) {
        Eigen::Map<Mat> gx(nx->grad_ref().data() + static_cast<std::size_t>(n) * xs.c * p, xs.c, p);
        gx.noalias() += wmat * gc;
      }
      if (nb->requires_grad) {
        auto& gb = nb->grad_ref();
        for (int c = 0; c < cout; ++c) {
          const T* plane = gn + c * out_plane;
          T s{0};
          for (std::size_t i = 0; i < out_plane; ++i) s += plane[i];
          gb[c] += s;
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Normalization, resampling, pooling

/// Per-sample, per-channel normalization without affine parameters.
template <class T>
Var<T> instance_norm(const Var<T>& x, T eps = T(1e-5)) {
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  Tensor<T> out(s);
  auto rstd = std::make_shared<std::vector<T>>(planes);
  for (std::size_t q = 0; q < planes; ++q) {
    const T* in = x.value().data() + q * plane;
    T mean{0};
    for (std::size_t i = 0; i < plane; ++i) mean += in[i];
    mean /= static_cast<T>(plane);
    T var{0};
    for (std::size_t i = 0; i < plane; ++i) var += (in[i] - mean) * (in[i] - mean);
    var /= static_cast<T>(plane);
    const T r = T{1} / std::sqrt(var + eps);
    (*rstd)[q] = r;
    T* o = out.data() + q * plane;
    for (std::size_t i = 0; i < plane; ++i) o[i] = (in[i] - mean) * r;
  }
  auto y = std::make_shared<Tensor<T>>(out);
  auto* nx = x.node();
  return Var<T>::make(std::move(out), {x}, [nx, y, rstd, plane, planes](const Tensor<T>& g) {
    auto& gx = nx->grad_ref();
    for (std::size_t q = 0; q < planes; ++q) {
      const T* gq = g.data() + q * plane;
      const T* yq = y->data() + q * plane;
      T mg{0};
      T mgy{0};
      for (std::size_t i = 0; i < plane; ++i) {
        mg += gq[i];
        mgy += gq[i] * yq[i];
      }
      mg /= static_cast<T>(plane);
      mgy /= static_cast<T>(plane);
      T* dst = gx.data() + q * plane;
      const T r = (*rstd)[q];
      for (std::size_t i = 0; i < plane; ++i) dst[i] += r * (gq[i] - mg - yq[i] * mgy);
    }
  });
}

namespace detail {

struct LerpTaps {
  std::vector<int> lo, hi;
  std::vector<double> frac;
};

// Half-pixel-centre sampling, edge clamped.
inline LerpTaps lerp_taps(int in, int factor) {
  LerpTaps t;
  const int out = in * factor;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) / factor - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(std::floor(src));
    i0 = std::min(i0, in - 1);
    t.lo[o] = i0;
    t.hi[o] = std::min(i0 + 1, in - 1);
    t.frac[o] = src - i0;
  }
  return t;
}

}  // namespace detail

/// Bilinear upsampling by an integer factor.
template <class T>
Var<T> upsample_bilinear(const Var<T>& x, int factor) {
  detail::require<ConfigError>(factor >= 1, "upsample factor must be >= 1");
  const Shape s = x.shape();
  const Shape os{s.n, s.c, s.h * factor, s.w * factor};
  auto ty = std::make_shared<detail::LerpTaps>(detail::lerp_taps(s.h, factor));
  auto tx = std::make_shared<detail::LerpTaps>(detail::lerp_taps(s.w, factor));
  Tensor<T> out(os);
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  for (std::size_t q = 0; q < planes; ++q) {
    const T* in = x.value().data() + q * s.plane();
    T* o = out.data() + q * os.plane();
    for (int oy = 0; oy < os.h; ++oy) {
      const T fy = static_cast<T>(ty->frac[oy]);
      const T* r0 = in + static_cast<std::size_t>(ty->lo[oy]) * s.w;
      const T* r1 = in + static_cast<std::size_t>(ty->hi[oy]) * s.w;
      for (int ox = 0; ox < os.w; ++ox) {
        const T fx = static_cast<T>(tx->frac[ox]);
        const int x0 = tx->lo[ox];
        const int x1 = tx->hi[ox];
        const T top = r0[x0] + fx * (r0[x1] - r0[x0]);
        const T bot = r1[x0] + fx * (r1[x1] - r1[x0]);
        o[static_cast<std::size_t>(oy) * os.w + ox] = top + fy * (bot - top);
      }
    }
  }
  auto* nx = x.node();
  return Var<T>::make(std::move(out), {x}, [nx, ty, tx, s, os, planes](const Tensor<T>& g) {
    auto& gx = nx->grad_ref();
    for (std::size_t q = 0; q < planes; ++q) {
      const T* gq = g.data() + q * os.plane();
      T* d = gx.data() + q * s.plane();
      for (int oy = 0; oy < os.h; ++oy) {
        const T fy = static_cast<T>(ty->frac[oy]);
        T* r0 = d + static_cast<std::size_t>(ty->lo[oy]) * s.w;
        T* r1 = d + static_cast<std::size_t>(ty->hi[oy]) * s.w;
        for (int ox = 0; ox < os.w; ++ox) {
          const T fx = static_cast<T>(tx->frac[ox]);
          const T gv = gq[static_cast<std::size_t>(oy) * os.w + ox];
          r0[tx->lo[ox]] += (T{1} - fy) * (T{1} - fx) * gv;
          r0[tx->hi[ox]] += (T{1} - fy) * fx * gv;
          r1[tx->lo[ox]] += fy * (T{1} - fx) * gv;
          r1[tx->hi[ox]] += fy * fx * gv;
        }
      }
    }
  });
}

/// [N,C,H,W] -> [N,C,1,1]
template <class T>
Var<T> global_avg_pool(const Var<T>& x) {
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  Tensor<T> out({s.n, s.c, 1, 1});
  for (std::size_t q = 0; q < out.size(); ++q) {
    T acc{0};
    for (std::size_t i = 0; i < plane; ++i) acc += x.value()[q * plane + i];
    out[q] = acc / static_cast<T>(plane);
  }
  auto* nx = x.node();
  return Var<T>::make(std::move(out), {x}, [nx, plane](const Tensor<T>& g) {
    auto& gx = nx->grad_ref();
    const T inv = T{1} / static_cast<T>(plane);
    for (std::size_t q = 0; q < g.size(); ++q) {
      for (std::size_t i = 0; i < plane; ++i) gx[q * plane + i] += g[q] * inv;
    }
  });
}

template <class T>
Var<T> mean(const Var<T>& x) {
  const std::size_t n = x.value().size();
  T acc{0};
  for (const T v : x.value().vec()) acc += v;
  auto* nx = x.node();
  return Var<T>::make(Tensor<T>::scalar(acc / static_cast<T>(n)), {x}, [nx, n](const Tensor<T>& g) {
    auto& gx = nx->grad_ref();
    const T d = g[0] / static_cast<T>(n);
    for (auto& v : gx.vec()) v += d;
  });
}

/// Scalar type of either a plain number or a Var.
template <class V>
struct scalar_of {
  using type = V;
};
template <class T>
struct scalar_of<Var<T>> {
  using type = T;
};
template <class V>
using scalar_of_t = typename scalar_of<V>::type;

/// Scalar constant in the graph's scalar type.
template <class T>
Var<T> zero_scalar() {
  return Var<T>::constant(Tensor<T>::scalar(T{0}));
}

}  // namespace synthmix::ag
