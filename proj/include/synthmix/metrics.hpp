#pragma once

// Segmentation metrics: Dice, average symmetric surface distance (ASSD),
// paired t-test, and per-case aggregation into an EvalReport.

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "synthmix/error.hpp"
#include "synthmix/tensor.hpp"

namespace synthmix {

/// Binary mask; any non-zero entry is foreground.
using BinaryMask = Tensor<std::uint8_t>;

/// Physical pixel size along rows (y) and columns (x).
struct Spacing {
  double y = 1.0;
  double x = 1.0;
};

/// Foreground mask of one class in a label map.
inline BinaryMask class_mask(const Tensor<std::uint8_t>& labels, int cls) {
  BinaryMask m(labels.shape());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = labels[i] == cls ? 1 : 0;
  return m;
}

/// 2|A n B| / (|A| + |B|); 1 when both masks are empty.
inline double dice(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_shape(pred, gt, "dice");
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0;
    const bool g = gt[i] != 0;
    a += p;
    b += g;
    both += p && g;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

/// Foreground pixels with at least one 4-neighbour in the background.
/// Pixels outside the image count as background.
inline BinaryMask surface(const BinaryMask& m) {
  const int h = m.shape().h;
  const int w = m.shape().w;
  BinaryMask s(m.shape());
  auto fg = [&](int y, int x) { return y >= 0 && y < h && x >= 0 && x < w && m(y, x) != 0; };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!fg(y, x)) continue;
      s(y, x) = (!fg(y - 1, x) || !fg(y + 1, x) || !fg(y, x - 1) || !fg(y, x + 1)) ? 1 : 0;
    }
  }
  return s;
}

namespace detail {

// Felzenszwalb-Huttenlocher lower envelope: d[q] = min_p f[p] + (step*(q-p))^2.
inline void edt_1d(const double* f, int n, std::ptrdiff_t stride, double step, double* out) {
  std::vector<int> v(n);
  std::vector<double> z(n + 1);
  const double s2 = step * step;
  int k = -1;
  for (int q = 0; q < n; ++q) {
    const double fq = f[q * stride];
    if (!std::isfinite(fq)) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -std::numeric_limits<double>::infinity();
      z[1] = std::numeric_limits<double>::infinity();
      continue;
    }
    // z[0] is -inf, so the pop loop always stops at k = 0.
    auto intersect = [&](int p) {
      return ((fq + s2 * q * q) - (f[p * stride] + s2 * p * p)) / (2.0 * s2 * (q - p));
    };
    double sep = intersect(v[k]);
    while (sep <= z[k]) sep = intersect(v[--k]);
    ++k;
    v[k] = q;
    z[k] = sep;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  if (k < 0) {
    for (int q = 0; q < n; ++q) out[q * stride] = std::numeric_limits<double>::infinity();
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double d = step * (q - v[j]);
    out[q * stride] = f[v[j] * stride] + d * d;
  }
}

}  // namespace detail

/// Exact Euclidean distance from every pixel to the nearest non-zero pixel of
/// `seeds`. Infinite everywhere if `seeds` is empty.
inline std::vector<double> distance_to(const BinaryMask& seeds, Spacing sp = {}) {
  const int h = seeds.shape().h;
  const int w = seeds.shape().w;
  std::vector<double> f(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = seeds[i] != 0 ? 0.0 : std::numeric_limits<double>::infinity();
  std::vector<double> tmp(f.size());
  for (int x = 0; x < w; ++x) detail::edt_1d(f.data() + x, h, w, sp.y, tmp.data() + x);
  for (int y = 0; y < h; ++y) {
    detail::edt_1d(tmp.data() + static_cast<std::size_t>(y) * w, w, 1, sp.x, f.data() + static_cast<std::size_t>(y) * w);
  }
  for (auto& d : f) d = std::sqrt(d);
  return f;
}

/// Mean over surface pixels of `a` of the distance to the surface of `b`.
inline double mean_surface_distance(const BinaryMask& a, const BinaryMask& b, Spacing sp = {}) {
  const BinaryMask sa = surface(a);
  const std::vector<double> db = distance_to(surface(b), sp);
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (sa[i] == 0) continue;
    acc += db[i];
    ++n;
  }
  return acc / static_cast<double>(n);
}

/// Average symmetric surface distance: the mean of both directional average
/// surface distances. Undefined (nullopt) when either mask is empty.
inline std::optional<double> assd(const BinaryMask& pred, const BinaryMask& gt, Spacing sp = {}) {
  require_same_shape(pred, gt, "assd");
  detail::require<ValidationError>(sp.x > 0.0 && sp.y > 0.0, "assd: spacing must be positive");
  auto any = [](const BinaryMask& m) {
    for (auto v : m.vec()) {
      if (v != 0) return true;
    }
    return false;
  };
  if (!any(pred) || !any(gt)) return std::nullopt;
  return 0.5 * (mean_surface_distance(pred, gt, sp) + mean_surface_distance(gt, pred, sp));
}

struct TTestResult {
  std::size_t n = 0;
  double mean_diff = 0.0;     // mean of a - b
  std::optional<double> t;    // undefined when the differences have zero variance
  std::optional<double> p;    // two-tailed
  bool degenerate = false;    // zero-variance differences (e.g. an exact tie)
};

/// Paired two-tailed Student t-test on a - b.
inline TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  detail::require<ValidationError>(a.size() == b.size(), "paired_t_test: score lists differ in length");
  detail::require<ValidationError>(a.size() >= 2, "paired_t_test: need at least two pairs");
  TTestResult r;
  r.n = a.size();
  const double n = static_cast<double>(r.n);
  std::vector<double> d(r.n);
  for (std::size_t i = 0; i < r.n; ++i) d[i] = a[i] - b[i];
  double mean = 0.0;
  for (double x : d) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  r.mean_diff = mean;
  const double var = ss / (n - 1.0);
  if (!(var > 0.0)) {
    r.degenerate = true;
    return r;
  }
  const double t = mean / std::sqrt(var / n);
  const boost::math::students_t dist(n - 1.0);
  r.t = t;
  r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return r;
}

/// Metrics for one evaluated case, foreground classes 1..C-1.
struct CaseResult {
  std::string id;
  std::map<int, double> dice;
  std::map<int, std::optional<double>> assd;
};

inline CaseResult evaluate_case(const std::string& id, const Tensor<std::uint8_t>& pred, const Tensor<std::uint8_t>& gt,
                                int num_classes, Spacing sp = {}) {
  require_same_shape(pred, gt, "evaluate_case");
  CaseResult r;
  r.id = id;
  for (int c = 1; c < num_classes; ++c) {
    const BinaryMask p = class_mask(pred, c);
    const BinaryMask g = class_mask(gt, c);
    r.dice[c] = dice(p, g);
    r.assd[c] = assd(p, g, sp);
  }
  return r;
}

struct EvalReport {
  std::map<int, double> per_class_dice;
  std::map<int, std::optional<double>> per_class_assd;  // nullopt if undefined in every case
  double mean_dice = 0.0;
  std::optional<double> mean_assd;
  std::size_t n_cases = 0;
  std::vector<CaseResult> cases;
  std::vector<std::string> warnings;
  /// Where the scores came from (checkpoint, dataset, split, domain); may be empty.
  nlohmann::json provenance = nlohmann::json::object();

  /// Per-case mean foreground Dice, in case order.
  [[nodiscard]] std::vector<double> case_mean_dice() const {
    std::vector<double> out;
    for (const auto& c : cases) {
      double s = 0.0;
      for (const auto& [cls, d] : c.dice) s += d;
      out.push_back(c.dice.empty() ? 0.0 : s / static_cast<double>(c.dice.size()));
    }
    return out;
  }
};

/// Averages per-case results. Undefined ASSD values are skipped with a warning.
inline EvalReport aggregate(std::vector<CaseResult> cases) {
  detail::require<ValidationError>(!cases.empty(), "aggregate: no cases");
  EvalReport rep;
  rep.n_cases = cases.size();
  std::map<int, double> assd_sum;
  std::map<int, std::size_t> assd_n;
  for (const auto& c : cases) {
    for (const auto& [cls, d] : c.dice) rep.per_class_dice[cls] += d;
    for (const auto& [cls, a] : c.assd) {
      assd_n.try_emplace(cls, 0);
      if (a) {
        assd_sum[cls] += *a;
        ++assd_n[cls];
      } else {
        rep.warnings.push_back("case " + c.id + " class " + std::to_string(cls) +
                               ": ASSD undefined (empty mask), excluded from average");
      }
    }
  }
  double dsum = 0.0;
  for (auto& [cls, d] : rep.per_class_dice) {
    d /= static_cast<double>(cases.size());
    dsum += d;
  }
  rep.mean_dice = dsum / static_cast<double>(rep.per_class_dice.size());
  double asum = 0.0;
  std::size_t acount = 0;
  for (const auto& [cls, n] : assd_n) {
    if (n == 0) {
      rep.per_class_assd[cls] = std::nullopt;
      continue;
    }
    rep.per_class_assd[cls] = assd_sum[cls] / static_cast<double>(n);
    asum += *rep.per_class_assd[cls];
    ++acount;
  }
  if (acount > 0) rep.mean_assd = asum / static_cast<double>(acount);
  rep.cases = std::move(cases);
  return rep;
}

inline nlohmann::json to_json(const EvalReport& r) {
  using nlohmann::json;
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json j;
  j["n_cases"] = r.n_cases;
  j["mean_dice"] = r.mean_dice;
  j["mean_assd"] = opt(r.mean_assd);
  json pd = json::object(), pa = json::object();
  for (const auto& [c, d] : r.per_class_dice) pd[std::to_string(c)] = d;
  for (const auto& [c, a] : r.per_class_assd) pa[std::to_string(c)] = opt(a);
  j["per_class_dice"] = pd;
  j["per_class_assd"] = pa;
  json cases = json::array();
  for (const auto& c : r.cases) {
    json cj;
    cj["id"] = c.id;
    json cd = json::object(), ca = json::object();
    for (const auto& [k, d] : c.dice) cd[std::to_string(k)] = d;
    for (const auto& [k, a] : c.assd) ca[std::to_string(k)] = opt(a);
    cj["dice"] = cd;
    cj["assd"] = ca;
    cases.push_back(cj);
  }
  j["cases"] = cases;
  j["warnings"] = r.warnings;
  j["provenance"] = r.provenance;
  return j;
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
  auto opt = [](const nlohmann::json& v) { return v.is_null() ? std::optional<double>{} : v.get<double>(); };
  EvalReport r;
  r.n_cases = j.at("n_cases").get<std::size_t>();
  r.mean_dice = j.at("mean_dice").get<double>();
  r.mean_assd = opt(j.at("mean_assd"));
  for (const auto& [k, v] : j.at("per_class_dice").items()) r.per_class_dice[std::stoi(k)] = v.get<double>();
  for (const auto& [k, v] : j.at("per_class_assd").items()) r.per_class_assd[std::stoi(k)] = opt(v);
  for (const auto& cj : j.at("cases")) {
    CaseResult c;
    c.id = cj.at("id").get<std::string>();
    for (const auto& [k, v] : cj.at("dice").items()) c.dice[std::stoi(k)] = v.get<double>();
    for (const auto& [k, v] : cj.at("assd").items()) c.assd[std::stoi(k)] = opt(v);
    r.cases.push_back(std::move(c));
  }
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  r.provenance = j.value("provenance", nlohmann::json::object());
  return r;
}

/// One row per case: id, dice per class, assd per class (empty if undefined).
inline std::string to_csv(const EvalReport& r) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "case";
  for (const auto& [c, d] : r.per_class_dice) os << ",dice_" << c;
  for (const auto& [c, a] : r.per_class_assd) os << ",assd_" << c;
  os << '\n';
  for (const auto& cs : r.cases) {
    os << cs.id;
    for (const auto& [c, d] : cs.dice) os << ',' << d;
    for (const auto& [c, a] : cs.assd) {
      os << ',';
      if (a) os << *a;
    }
    os << '\n';
  }
  return os.str();
}

/// Writes `<path>` as JSON and the per-case table next to it with a .csv extension.
inline void write_report(const EvalReport& r, const std::filesystem::path& json_path) {
  std::ofstream js(json_path, std::ios::binary);
  detail::require<DataError>(static_cast<bool>(js), "cannot write report " + json_path.string());
  js << to_json(r).dump(2) << '\n';
  std::filesystem::path csv = json_path;
  csv.replace_extension(".csv");
  std::ofstream cs(csv, std::ios::binary);
  detail::require<DataError>(static_cast<bool>(cs), "cannot write report " + csv.string());
  cs << to_csv(r);
}

}  // namespace synthmix
