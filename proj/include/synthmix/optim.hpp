#pragma once

#include <cmath>
#include <vector>

#include "synthmix/layers.hpp"

namespace synthmix {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over a fixed parameter group. Each group carries its own moments, so
/// a parameter shared by two optimizers gets two independent states.
template <class T>
class Adam {
 public:
  Adam() = default;
  Adam(ParamList<T> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
      m_.emplace_back(p.var.value().size(), 0.0);
      v_.emplace_back(p.var.value().size(), 0.0);
    }
  }

  /// Applies one update from the accumulated gradients. Parameters without a
  /// gradient are left untouched.
  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& var = params_[k].var;
      if (!var.has_grad()) continue;
      auto& val = var.mutable_value();
      const auto& g = var.grad();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < val.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        const double update = cfg_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
        val[i] = static_cast<T>(static_cast<double>(val[i]) - update);
      }
    }
  }

  void zero_grad() { zero_grads(params_); }

  [[nodiscard]] const ParamList<T>& params() const { return params_; }
  [[nodiscard]] long steps() const { return t_; }

 private:
  ParamList<T> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

}  // namespace synthmix
