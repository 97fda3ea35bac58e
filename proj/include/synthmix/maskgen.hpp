#pragma once

// SynthMix mask generation: a k x k Bernoulli(lambda) grid, upsampled by
// block replication to the image side so that every grid cell governs one
// (side/k)^2 patch and the mask stays binary.

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "synthmix/error.hpp"
#include "synthmix/rng.hpp"
#include "synthmix/tensor.hpp"

namespace synthmix {

struct MixMaskSpec {
  int k = 8;
  double lambda_ratio = 0.5;
  int image_side = 256;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require<ConfigError>(k > 0, "mask grid side k must be positive, got " + std::to_string(k));
    detail::require<ConfigError>(lambda_ratio >= 0.0 && lambda_ratio <= 1.0,
                                 "mask ratio must lie in [0,1], got " + std::to_string(lambda_ratio));
    detail::require<ConfigError>(image_side > 0, "image side must be positive");
    detail::require<ConfigError>(image_side % k == 0, "image side " + std::to_string(image_side) +
                                                          " is not divisible by k=" + std::to_string(k));
  }

  [[nodiscard]] int patch_side() const { return image_side / k; }
};

/// k x k binary grid, row-major. 1 marks cells drawn from the second
/// (target / synthetic) image.
class MaskGrid {
 public:
  MaskGrid() = default;
  explicit MaskGrid(int k, std::uint8_t fill = 0) : k_(k), cells_(static_cast<std::size_t>(k) * k, fill) {
    detail::require<ConfigError>(k > 0, "grid side must be positive");
  }
  MaskGrid(int k, std::vector<std::uint8_t> cells) : k_(k), cells_(std::move(cells)) {
    detail::require<DimensionError>(cells_.size() == static_cast<std::size_t>(k) * k, "grid cell count != k*k");
    for (auto c : cells_) {
      if (c > 1) throw ValidationError("grid cells must be binary");
    }
  }

  [[nodiscard]] int k() const { return k_; }
  [[nodiscard]] std::uint8_t operator()(int i, int j) const { return cells_[static_cast<std::size_t>(i) * k_ + j]; }
  std::uint8_t& operator()(int i, int j) { return cells_[static_cast<std::size_t>(i) * k_ + j]; }
  [[nodiscard]] const std::vector<std::uint8_t>& cells() const { return cells_; }

  [[nodiscard]] std::size_t ones() const { return std::accumulate(cells_.begin(), cells_.end(), std::size_t{0}); }
  [[nodiscard]] double mean() const { return cells_.empty() ? 0.0 : static_cast<double>(ones()) / cells_.size(); }

  /// Cells as a [1,1,k,k] tensor of 0/1 values.
  template <class T>
  [[nodiscard]] Tensor<T> as_tensor() const {
    Tensor<T> t = Tensor<T>::image(k_, k_);
    for (std::size_t i = 0; i < cells_.size(); ++i) t[i] = static_cast<T>(cells_[i]);
    return t;
  }

  /// Complement grid (1 - cells).
  [[nodiscard]] MaskGrid inverted() const {
    MaskGrid g = *this;
    for (auto& c : g.cells_) c = static_cast<std::uint8_t>(1 - c);
    return g;
  }

  bool operator==(const MaskGrid&) const = default;

 private:
  int k_ = 0;
  std::vector<std::uint8_t> cells_;
};

/// Per-pixel mask M with the grid it was replicated from.
class PixelMask {
 public:
  PixelMask() = default;
  PixelMask(Tensor<float> values, MaskGrid grid) : values_(std::move(values)), grid_(std::move(grid)) {}

  [[nodiscard]] const Tensor<float>& values() const { return values_; }
  [[nodiscard]] const MaskGrid& source_grid() const { return grid_; }
  [[nodiscard]] int side() const { return values_.shape().h; }

  template <class T>
  [[nodiscard]] Tensor<T> as() const {
    return values_.template cast<T>();
  }

 private:
  Tensor<float> values_;
  MaskGrid grid_;
};

/// Each cell independently 1 with probability spec.lambda_ratio.
inline MaskGrid generate_grid(const MixMaskSpec& spec, CounterRng& rng) {
  spec.validate();
  MaskGrid g(spec.k);
  for (int i = 0; i < spec.k; ++i) {
    for (int j = 0; j < spec.k; ++j) g(i, j) = rng.uniform01() < spec.lambda_ratio ? 1 : 0;
  }
  return g;
}

/// Deterministic draw keyed on (spec.seed, draw_index).
inline MaskGrid generate_grid(const MixMaskSpec& spec, std::uint64_t draw_index) {
  CounterRng rng = CounterRng(spec.seed, streams::kMask).split(draw_index);
  return generate_grid(spec, rng);
}

/// Nearest-neighbour (block replication) upsampling of a grid.
inline PixelMask upsample(const MaskGrid& grid, int image_side) {
  detail::require<ConfigError>(grid.k() > 0 && image_side > 0 && image_side % grid.k() == 0,
                               "image side " + std::to_string(image_side) + " is not divisible by grid side " +
                                   std::to_string(grid.k()));
  const int block = image_side / grid.k();
  Tensor<float> m = Tensor<float>::image(image_side, image_side);
  for (int y = 0; y < image_side; ++y) {
    for (int x = 0; x < image_side; ++x) m(y, x) = static_cast<float>(grid(y / block, x / block));
  }
  return PixelMask(std::move(m), grid);
}

inline double mask_mean(const PixelMask& mask) {
  const auto& v = mask.values().vec();
  // Entries are 0/1, so an integer count keeps the mean exact.
  std::size_t ones = 0;
  for (float x : v) ones += x != 0.0f ? 1 : 0;
  return v.empty() ? 0.0 : static_cast<double>(ones) / static_cast<double>(v.size());
}

/// Per-iteration mask ratio drawn uniformly from [lo, hi].
inline double sample_ratio(CounterRng& rng, double lo = 0.3, double hi = 0.7) {
  detail::require<ConfigError>(0.0 <= lo && lo <= hi && hi <= 1.0, "ratio range must satisfy 0<=lo<=hi<=1");
  return lo + (hi - lo) * rng.uniform01();
}

}  // namespace synthmix
