#pragma once

// Ablation runner: trains one configuration per table row and seed, then
// emits a table laid out like the usual component ablation (baseline,
// "Model 0" without image discriminators, one row per mask resolution k).

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "synthmix/config.hpp"
#include "synthmix/metrics.hpp"
#include "synthmix/trainer.hpp"

namespace synthmix {

struct AblationOptions {
  std::vector<int> k_values{4, 8, 32};
  int seeds = 1;                  // seeds base.seed, base.seed + 1, ...
  bool model0 = true;             // SynthMix at the base k without D_S, D_T
  bool sifa_baseline = true;      // disable_synthmix
  bool source_only = false;       // no-adaptation row
  bool mixup_baselines = false;   // global Mixup and CutMix rows
  bool reuse_completed = true;    // skip runs whose stored config matches exactly
};

struct AblationRow {
  std::string name;
  std::string slug;
  RunConfig config;  // seed of the first run
  std::vector<EvalReport> reports;  // one per seed

  [[nodiscard]] std::vector<double> seed_dice() const {
    std::vector<double> v;
    for (const auto& r : reports) v.push_back(r.mean_dice);
    return v;
  }
  [[nodiscard]] double mean_dice() const {
    double s = 0.0;
    for (double d : seed_dice()) s += d;
    return reports.empty() ? 0.0 : s / static_cast<double>(reports.size());
  }
  [[nodiscard]] double sd_dice() const {
    if (reports.size() < 2) return 0.0;
    const double m = mean_dice();
    double ss = 0.0;
    for (double d : seed_dice()) ss += (d - m) * (d - m);
    return std::sqrt(ss / static_cast<double>(reports.size() - 1));
  }
  [[nodiscard]] std::optional<double> mean_assd() const {
    double s = 0.0;
    int n = 0;
    for (const auto& r : reports) {
      if (r.mean_assd) {
        s += *r.mean_assd;
        ++n;
      }
    }
    return n ? std::optional<double>(s / n) : std::nullopt;
  }
  /// Per-case mean Dice averaged over seeds, in case order.
  [[nodiscard]] std::vector<double> case_dice_over_seeds() const {
    std::vector<double> acc;
    for (const auto& r : reports) {
      const auto c = r.case_mean_dice();
      if (acc.empty()) acc.assign(c.size(), 0.0);
      detail::require<DataError>(c.size() == acc.size(), "reports disagree on the number of cases");
      for (std::size_t i = 0; i < c.size(); ++i) acc[i] += c[i];
    }
    for (auto& a : acc) a /= static_cast<double>(reports.size());
    return acc;
  }
};

struct AblationTable {
  std::vector<AblationRow> rows;
  std::vector<std::string> warnings;

  [[nodiscard]] const AblationRow* find(const std::string& slug) const {
    for (const auto& r : rows) {
      if (r.slug == slug) return &r;
    }
    return nullptr;
  }
};

/// Removes repeated k values, keeping first occurrences; one warning per duplicate.
inline std::vector<int> dedup_k_values(const std::vector<int>& ks, std::vector<std::string>* warnings) {
  std::vector<int> out;
  for (int k : ks) {
    if (std::find(out.begin(), out.end(), k) != out.end()) {
      if (warnings) warnings->push_back("duplicate k=" + std::to_string(k) + " ignored");
      continue;
    }
    out.push_back(k);
  }
  return out;
}

/// Row configurations in table order, without running anything.
inline std::vector<AblationRow> plan_ablation(const RunConfig& base, const AblationOptions& opt,
                                              std::vector<std::string>* warnings = nullptr) {
  detail::require<ConfigError>(opt.seeds >= 1, "need at least one seed");
  const std::vector<int> ks = dedup_k_values(opt.k_values, warnings);
  detail::require<ConfigError>(!ks.empty(), "no k values given");
  for (int k : ks) detail::require<ConfigError>(k > 0, "k values must be positive");
  RunConfig clean = base;
  clean.ablation = AblationFlags{};
  std::vector<AblationRow> rows;
  auto add = [&](std::string name, std::string slug, RunConfig c) {
    c.validate();
    rows.push_back({std::move(name), std::move(slug), std::move(c), {}});
  };
  if (opt.source_only) {
    RunConfig c = clean;
    c.ablation.source_only = true;
    add("Source only (no adaptation)", "source_only", c);
  }
  if (opt.sifa_baseline) {
    RunConfig c = clean;
    c.ablation.disable_synthmix = true;
    add("Baseline (no SynthMix)", "baseline", c);
  }
  if (opt.mixup_baselines) {
    RunConfig c = clean;
    c.ablation.mixup_baseline = MixupBaseline::GlobalMixup;
    add("Global Mixup", "global_mixup", c);
    c.ablation.mixup_baseline = MixupBaseline::CutMix;
    add("CutMix", "cutmix", c);
  }
  if (opt.model0) {
    RunConfig c = clean;
    c.ablation.disable_image_discriminators = true;
    add("Model 0: no D_S, D_T (k=" + std::to_string(clean.mask.k) + ")", "model0", c);
  }
  for (int k : ks) {
    RunConfig c = clean;
    c.ablation.k_override = k;
    add("SynthMix k=" + std::to_string(k), "k" + std::to_string(k), c);
  }
  return rows;
}

/// Trains (or reuses) one run and returns its target-test report.
inline EvalReport run_and_evaluate(const RunConfig& cfg, const DatasetManifest& data, const std::filesystem::path& dir,
                                   bool reuse, std::ostream* progress) {
  namespace fs = std::filesystem;
  const auto report_path = dir / "final_report.json";
  if (reuse && fs::exists(report_path) && fs::exists(dir / "config.json")) {
    std::ifstream is(dir / "config.json");
    const auto stored = nlohmann::json::parse(is, nullptr, false);
    if (!stored.is_discarded() && stored == to_json(cfg)) {
      std::ifstream rs(report_path);
      return eval_report_from_json(nlohmann::json::parse(rs));
    }
  }
  Trainer trainer(cfg, data);
  trainer.run(dir, progress);
  EvalReport rep = evaluate_checkpoint(dir / "final.ckpt", data, Split::Test);
  write_report(rep, report_path);
  return rep;
}

inline AblationTable run_ablation(const RunConfig& base, const AblationOptions& opt, const std::filesystem::path& out,
                                  std::ostream* progress = nullptr) {
  AblationTable table;
  table.rows = plan_ablation(base, opt, &table.warnings);
  if (progress) {
    for (const auto& w : table.warnings) *progress << "warning: " << w << '\n';
  }
  const DatasetManifest data = load_manifest(base.dataset);
  for (const auto& row : table.rows) {
    if (!row.config.uses_synthmix()) continue;
    const int k = row.config.effective_k();
    detail::require<ConfigError>(data.spec.image_side % k == 0, "k=" + std::to_string(k) + " does not divide the " +
                                                                    std::to_string(data.spec.image_side) +
                                                                    "px image side");
  }
  for (auto& row : table.rows) {
    for (int s = 0; s < opt.seeds; ++s) {
      RunConfig c = row.config;
      c.seed = base.seed + static_cast<std::uint64_t>(s);
      const auto dir = out / row.slug / ("seed" + std::to_string(c.seed));
      if (progress) *progress << "== " << row.name << "  seed " << c.seed << '\n';
      row.reports.push_back(run_and_evaluate(c, data, dir, opt.reuse_completed, progress));
    }
  }
  return table;
}

inline std::string format_table_markdown(const AblationTable& t) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1);
  os << "| Ablative setting | Dice | ASSD | seeds | per-seed Dice |\n";
  os << "|---|---|---|---|---|\n";
  for (const auto& r : t.rows) {
    os << "| " << r.name << " | " << 100.0 * r.mean_dice();
    if (r.reports.size() > 1) os << " ± " << 100.0 * r.sd_dice();
    os << " | ";
    if (auto a = r.mean_assd()) {
      os << *a;
    } else {
      os << "n/a";
    }
    os << " | " << r.reports.size() << " | ";
    for (std::size_t i = 0; i < r.reports.size(); ++i) os << (i ? ", " : "") << 100.0 * r.reports[i].mean_dice;
    os << " |\n";
  }
  return os.str();
}

inline std::string format_table_csv(const AblationTable& t) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "setting,slug,seeds,dice_mean,dice_sd,assd_mean\n";
  for (const auto& r : t.rows) {
    os << '"' << r.name << "\"," << r.slug << ',' << r.reports.size() << ',' << r.mean_dice() << ',' << r.sd_dice()
       << ',';
    if (auto a = r.mean_assd()) os << *a;
    os << '\n';
  }
  return os.str();
}

inline nlohmann::json to_json(const AblationTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows) {
    const auto a = r.mean_assd();
    rows.push_back({{"setting", r.name},
                    {"slug", r.slug},
                    {"seeds", r.reports.size()},
                    {"dice_mean", r.mean_dice()},
                    {"dice_sd", r.sd_dice()},
                    {"dice_per_seed", r.seed_dice()},
                    {"assd_mean", a ? nlohmann::json(*a) : nlohmann::json(nullptr)}});
  }
  return {{"rows", rows}, {"warnings", t.warnings}};
}

inline void write_ablation_table(const AblationTable& t, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  detail::write_text(out / "ablation.md", format_table_markdown(t));
  detail::write_text(out / "ablation.csv", format_table_csv(t));
  detail::write_text(out / "ablation.json", to_json(t).dump(2) + "\n");
}

}  // namespace synthmix
