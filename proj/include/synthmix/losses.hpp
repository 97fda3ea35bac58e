#pragma once

// Scalar loss ops with fused backward passes.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "synthmix/autograd.hpp"

namespace synthmix {

/// Logits are clamped to +/- this before any sigmoid-based loss.
inline constexpr double kLogitClamp = 15.0;

template <class T>
T sigmoid(T z) {
  return T{1} / (T{1} + std::exp(-z));
}

namespace ag {

/// mean over elements of w*(x - target)^2 / mean(w); unweighted if `weights` is empty.
/// Returns 0 when all weights are zero.
template <class T>
Var<T> least_squares(const Var<T>& x, const Tensor<T>& target, const Tensor<T>& weights = {}) {
  require_same_shape(x.value(), target, "least_squares target");
  const bool weighted = !weights.empty();
  if (weighted) require_same_shape(x.value(), weights, "least_squares weights");
  T wsum{0};
  T acc{0};
  for (std::size_t i = 0; i < x.value().size(); ++i) {
    const T w = weighted ? weights[i] : T{1};
    const T d = x.value()[i] - target[i];
    acc += w * d * d;
    wsum += w;
  }
  const T norm = wsum > T{0} ? T{1} / wsum : T{0};
  auto* nx = x.node();
  auto tgt = std::make_shared<Tensor<T>>(target);
  auto wts = std::make_shared<Tensor<T>>(weights);
  return Var<T>::make(Tensor<T>::scalar(acc * norm), {x}, [nx, tgt, wts, weighted, norm](const Tensor<T>& g) {
    auto& gx = nx->grad_ref();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const T w = weighted ? (*wts)[i] : T{1};
      gx[i] += g[0] * norm * T{2} * w * (nx->value[i] - (*tgt)[i]);
    }
  });
}

/// Least squares against a constant target value.
template <class T>
Var<T> least_squares(const Var<T>& x, T target) {
  return least_squares(x, Tensor<T>(x.shape(), target));
}

/// Weighted least squares on sigmoid(clamp(logit)) probabilities.
/// Normalized by sum(weights); zero when no weight is set.
template <class T>
Var<T> sigmoid_least_squares(const Var<T>& logits, const Tensor<T>& target, const Tensor<T>& weights) {
  require_same_shape(logits.value(), target, "sigmoid_least_squares target");
  require_same_shape(logits.value(), weights, "sigmoid_least_squares weights");
  const T lim = static_cast<T>(kLogitClamp);
  T wsum{0};
  T acc{0};
  for (std::size_t i = 0; i < logits.value().size(); ++i) {
    const T p = sigmoid(std::clamp(logits.value()[i], -lim, lim));
    const T d = p - target[i];
    acc += weights[i] * d * d;
    wsum += weights[i];
  }
  const T norm = wsum > T{0} ? T{1} / wsum : T{0};
  auto* nx = logits.node();
  auto tgt = std::make_shared<Tensor<T>>(target);
  auto wts = std::make_shared<Tensor<T>>(weights);
  return Var<T>::make(Tensor<T>::scalar(acc * norm), {logits}, [nx, tgt, wts, norm, lim](const Tensor<T>& g) {
    auto& gx = nx->grad_ref();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const T z = nx->value[i];
      if (z < -lim || z > lim) continue;
      const T p = sigmoid(z);
      gx[i] += g[0] * norm * T{2} * (*wts)[i] * (p - (*tgt)[i]) * p * (T{1} - p);
    }
  });
}

/// Mean binary cross-entropy on clamped logits.
template <class T>
Var<T> bce_with_logits(const Var<T>& logits, const Tensor<T>& target) {
  require_same_shape(logits.value(), target, "bce_with_logits");
  const T lim = static_cast<T>(kLogitClamp);
  const std::size_t n = target.size();
  T acc{0};
  for (std::size_t i = 0; i < n; ++i) {
    const T z = std::clamp(logits.value()[i], -lim, lim);
    const T t = target[i];
    acc += std::max(z, T{0}) - z * t + std::log1p(std::exp(-std::abs(z)));
  }
  auto* nx = logits.node();
  auto tgt = std::make_shared<Tensor<T>>(target);
  return Var<T>::make(Tensor<T>::scalar(acc / static_cast<T>(n)), {logits}, [nx, tgt, n, lim](const Tensor<T>& g) {
    auto& gx = nx->grad_ref();
    const T scale = g[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const T z = nx->value[i];
      if (z < -lim || z > lim) continue;
      gx[i] += scale * (sigmoid(z) - (*tgt)[i]);
    }
  });
}

/// mean |a - b|
template <class T>
Var<T> l1(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.value(), b.value(), "l1");
  const std::size_t n = a.value().size();
  T acc{0};
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(a.value()[i] - b.value()[i]);
  auto* na = a.node();
  auto* nb = b.node();
  return Var<T>::make(Tensor<T>::scalar(acc / static_cast<T>(n)), {a, b}, [na, nb, n](const Tensor<T>& g) {
    const T s = g[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const T d = na->value[i] - nb->value[i];
      const T sg = d > T{0} ? s : (d < T{0} ? -s : T{0});
      if (na->requires_grad) na->grad_ref()[i] += sg;
      if (nb->requires_grad) nb->grad_ref()[i] -= sg;
    }
  });
}

/// Per-pixel softmax over channels of [N,C,H,W] logits.
template <class T>
Tensor<T> softmax_channels(const Tensor<T>& logits) {
  const Shape s = logits.shape();
  Tensor<T> out(s);
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    const std::size_t base = static_cast<std::size_t>(n) * s.c * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      T mx = logits[base + p];
      for (int c = 1; c < s.c; ++c) mx = std::max(mx, logits[base + c * plane + p]);
      T z{0};
      for (int c = 0; c < s.c; ++c) {
        const T e = std::exp(logits[base + c * plane + p] - mx);
        out[base + c * plane + p] = e;
        z += e;
      }
      for (int c = 0; c < s.c; ++c) out[base + c * plane + p] /= z;
    }
  }
  return out;
}

/// Segmentation loss: mean pixel cross-entropy + (1 - mean soft Dice over classes).
/// `labels` holds N*H*W class indices. Soft Dice uses additive smoothing of 1.
template <class T>
Var<T> segmentation_loss(const Var<T>& logits, const std::vector<int>& labels) {
  const Shape s = logits.shape();
  const std::size_t plane = s.plane();
  detail::require<DimensionError>(labels.size() == static_cast<std::size_t>(s.n) * plane,
                                  "segmentation_loss: label count does not match logits " + s.str());
  for (int y : labels) {
    if (y < 0 || y >= s.c) {
      throw ValidationError("segmentation_loss: class index " + std::to_string(y) + " out of range [0," +
                            std::to_string(s.c) + ")");
    }
  }
  constexpr T kSmooth{1};
  auto prob = std::make_shared<Tensor<T>>(softmax_channels(logits.value()));
  const std::size_t npix = static_cast<std::size_t>(s.n) * plane;
  T ce{0};
  std::vector<T> inter(s.c, T{0}), psum(s.c, T{0}), ysum(s.c, T{0});
  for (int n = 0; n < s.n; ++n) {
    const std::size_t base = static_cast<std::size_t>(n) * s.c * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      const int y = labels[n * plane + p];
      ce -= std::log(std::max((*prob)[base + y * plane + p], std::numeric_limits<T>::min()));
      for (int c = 0; c < s.c; ++c) psum[c] += (*prob)[base + c * plane + p];
      inter[y] += (*prob)[base + y * plane + p];
      ysum[y] += T{1};
    }
  }
  ce /= static_cast<T>(npix);
  T dice{0};
  for (int c = 0; c < s.c; ++c) dice += (T{2} * inter[c] + kSmooth) / (psum[c] + ysum[c] + kSmooth);
  dice /= static_cast<T>(s.c);
  auto* nx = logits.node();
  return Var<T>::make(
      Tensor<T>::scalar(ce + T{1} - dice), {logits},
      [nx, prob, labels, s, plane, npix, inter, psum, ysum, kSmooth](const Tensor<T>& g) {
        auto& gx = nx->grad_ref();
        // dL/dp_c for the dice term, then chain through softmax.
        std::vector<T> num(s.c), den(s.c);
        for (int c = 0; c < s.c; ++c) {
          num[c] = T{2} * inter[c] + kSmooth;
          den[c] = psum[c] + ysum[c] + kSmooth;
        }
        const T inv_c = T{1} / static_cast<T>(s.c);
        const T inv_n = T{1} / static_cast<T>(npix);
        std::vector<T> dp(s.c);
        for (int n = 0; n < s.n; ++n) {
          const std::size_t base = static_cast<std::size_t>(n) * s.c * plane;
          for (std::size_t p = 0; p < plane; ++p) {
            const int y = labels[n * plane + p];
            T dot{0};
            for (int c = 0; c < s.c; ++c) {
              const T yc = (c == y) ? T{1} : T{0};
              dp[c] = -inv_c * (T{2} * yc * den[c] - num[c]) / (den[c] * den[c]);
              dot += dp[c] * (*prob)[base + c * plane + p];
            }
            for (int c = 0; c < s.c; ++c) {
              const T pc = (*prob)[base + c * plane + p];
              const T yc = (c == y) ? T{1} : T{0};
              gx[base + c * plane + p] += g[0] * (inv_n * (pc - yc) + pc * (dp[c] - dot));
            }
          }
        }
      });
}

}  // namespace ag
}  // namespace synthmix
