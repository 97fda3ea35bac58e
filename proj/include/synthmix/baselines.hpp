#pragma once

// Whole-image mix-up protocols used as comparison baselines: global Mixup
// (convex blend with a Beta-distributed coefficient) and CutMix (one
// rectangular patch pasted from the other image, area ratio from a Beta draw).

#include <algorithm>
#include <cmath>
#include <random>

#include "synthmix/rng.hpp"
#include "synthmix/tensor.hpp"

namespace synthmix {

/// Blend weights: `mask` weighs the target-appearance image, and
/// `target_fraction` is its mean, the global Inspector target.
struct BaselineMix {
  Tensor<float> mask;
  double target_fraction = 0.0;
};

/// Beta(a, b) through two Gamma draws.
inline double sample_beta(CounterRng& rng, double a, double b) {
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return (x + y) > 0.0 ? x / (x + y) : 0.5;
}

inline BaselineMix global_mixup_mask(int side, CounterRng& rng, double alpha) {
  const double lam = sample_beta(rng, alpha, alpha);
  return {Tensor<float>::image(side, side, static_cast<float>(lam)), static_cast<double>(static_cast<float>(lam))};
}

/// CutMix box: centre uniform over the image, side lengths side*sqrt(1-lam),
/// clipped at the border. Box pixels take the target-appearance image.
inline BaselineMix cutmix_mask(int side, CounterRng& rng, double alpha) {
  const double lam = sample_beta(rng, alpha, alpha);
  const double cut = std::sqrt(1.0 - lam);
  const int cw = static_cast<int>(side * cut);
  const int cy = static_cast<int>(rng.uniform01() * side);
  const int cx = static_cast<int>(rng.uniform01() * side);
  const int y0 = std::clamp(cy - cw / 2, 0, side), y1 = std::clamp(cy + cw / 2, 0, side);
  const int x0 = std::clamp(cx - cw / 2, 0, side), x1 = std::clamp(cx + cw / 2, 0, side);
  BaselineMix m{Tensor<float>::image(side, side), 0.0};
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) m.mask(y, x) = 1.0f;
  }
  m.target_fraction = static_cast<double>((y1 - y0) * (x1 - x0)) / (static_cast<double>(side) * side);
  return m;
}

/// mask * a + (1 - mask) * b
inline Tensor<float> blend(const Tensor<float>& mask, const Tensor<float>& a, const Tensor<float>& b) {
  require_same_shape(a, b, "blend");
  require_same_shape(mask, a, "blend mask");
  Tensor<float> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mask[i] * a[i] + (1.0f - mask[i]) * b[i];
  return out;
}

}  // namespace synthmix
