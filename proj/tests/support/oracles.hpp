#pragma once

// Independent reference implementations used only by tests: set-count Dice,
// pairwise surface distances, chi-square critical values, and a central
// finite-difference gradient checker.

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "synthmix/autograd.hpp"
#include "synthmix/layers.hpp"
#include "synthmix/metrics.hpp"

namespace oracle {

using synthmix::BinaryMask;

inline double dice(const BinaryMask& a, const BinaryMask& b) {
  std::vector<std::size_t> sa, sb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i]) sa.push_back(i);
    if (b[i]) sb.push_back(i);
  }
  std::vector<std::size_t> both;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(both));
  if (sa.empty() && sb.empty()) return 1.0;
  return 2.0 * static_cast<double>(both.size()) / static_cast<double>(sa.size() + sb.size());
}

struct Px {
  int y, x;
};

// Border pixels: foreground with a 4-neighbour that is background or off-image.
inline std::vector<Px> border(const BinaryMask& m) {
  const int h = m.shape().h, w = m.shape().w;
  std::vector<Px> out;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!m(y, x)) continue;
      bool edge = false;
      const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
      for (int k = 0; k < 4; ++k) {
        const int yy = y + dy[k], xx = x + dx[k];
        if (yy < 0 || yy >= h || xx < 0 || xx >= w || !m(yy, xx)) edge = true;
      }
      if (edge) out.push_back({y, x});
    }
  }
  return out;
}

inline double directed(const std::vector<Px>& from, const std::vector<Px>& to, double sy, double sx) {
  double acc = 0.0;
  for (const auto& p : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : to) {
      const double dy = (p.y - q.y) * sy, dx = (p.x - q.x) * sx;
      best = std::min(best, dy * dy + dx * dx);
    }
    acc += std::sqrt(best);
  }
  return acc / static_cast<double>(from.size());
}

inline std::optional<double> assd(const BinaryMask& a, const BinaryMask& b, double sy = 1.0, double sx = 1.0) {
  const auto ba = border(a), bb = border(b);
  if (ba.empty() || bb.empty()) return std::nullopt;
  return 0.5 * (directed(ba, bb, sy, sx) + directed(bb, ba, sy, sx));
}

/// Upper critical value of chi-square with `dof` degrees of freedom.
inline double chi2_critical(double dof, double alpha) {
  return boost::math::quantile(boost::math::complement(boost::math::chi_squared(dof), alpha));
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;      // parameter with the largest error
  std::size_t coords = 0;
};

/// Compares backprop gradients with central differences for every
/// coordinate of every parameter. Error per tensor is
/// |g_bp - g_fd| / max(|g_bp|, |g_fd|) in the 2-norm; tensors whose
/// gradients are both below `floor` in norm are compared absolutely.
template <class F>
GradCheck check_gradients(const synthmix::ParamList<double>& params, F&& loss, double eps = 1e-3,
                          double floor = 1e-8) {
  namespace ag = synthmix::ag;
  synthmix::zero_grads(params);
  ag::backward(loss());
  GradCheck res;
  ag::NoGradGuard guard;
  for (const auto& p : params) {
    auto var = p.var;
    const std::size_t n = var.value().size();
    std::vector<double> analytic(n, 0.0);
    if (var.has_grad()) analytic.assign(var.grad().vec().begin(), var.grad().vec().end());
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double& x = var.mutable_value()[i];
      const double x0 = x;
      x = x0 + eps;
      const double fp = loss().item();
      x = x0 - eps;
      const double fm = loss().item();
      x = x0;
      const double num = (fp - fm) / (2.0 * eps);
      diff2 += (num - analytic[i]) * (num - analytic[i]);
      a2 += analytic[i] * analytic[i];
      n2 += num * num;
    }
    res.coords += n;
    const double scale = std::max(std::sqrt(a2), std::sqrt(n2));
    const double err = scale < floor ? std::sqrt(diff2) : std::sqrt(diff2) / scale;
    if (res.worst.empty() || err > res.max_rel_error) {
      res.max_rel_error = err;
      res.worst = p.name;
    }
  }
  return res;
}

}  // namespace oracle
