// synthmix command-line front end.
//   gen-data --spec <json> --out <dir>
//   train    --config <json> --out <dir>
//   eval     --checkpoint <file> --data <dir> --split test --out <file>
//   ablate   --config <json> --k 4,8,32 --out <dir>
//   plot     --in <dir> --out <dir>
// Exit codes: 0 ok, 1 other failure, 2 config/usage error, 3 data error,
// 4 numerical divergence.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "synthmix/synthmix.hpp"

namespace fs = std::filesystem;
using namespace synthmix;

namespace {

enum Exit : int { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kDiverged = 4 };

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw ConfigError("unknown split '" + s + "' (expected train or test)");
}

Domain parse_domain(const std::string& s) {
  if (s == "source") return Domain::Source;
  if (s == "target") return Domain::Target;
  throw ConfigError("unknown domain '" + s + "' (expected source or target)");
}

int cmd_gen_data(const std::optional<std::string>& spec_path, const std::string& out) {
  ToyDatasetSpec spec;
  if (spec_path) spec = toy_spec_from_json(read_json_file(*spec_path));
  const auto m = generate_toy_dataset(spec, out);
  std::cout << "wrote " << m.samples.size() << " samples to " << out << '\n';
  return kOk;
}

int cmd_train(const std::string& config, const std::string& out, std::optional<long> iterations,
              std::optional<std::uint64_t> seed) {
  RunConfig cfg = load_run_config(config);
  if (iterations) cfg.iterations = *iterations;
  if (seed) cfg.seed = *seed;
  cfg.validate();
  const DatasetManifest data = load_manifest(cfg.dataset);
  Trainer trainer(cfg, data);
  const RunLog log = trainer.run(out, &std::cerr);
  const EvalReport rep = evaluate_checkpoint(fs::path(out) / "final.ckpt", data, Split::Test);
  write_report(rep, fs::path(out) / "final_report.json");
  std::cout << "trained " << cfg.iterations << " iterations in " << log.wall_seconds << " s; target test Dice "
            << rep.mean_dice << '\n';
  return kOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir, const std::string& split,
             const std::string& domain, const std::string& out) {
  const DatasetManifest data = load_manifest(data_dir);
  const EvalReport rep = evaluate_checkpoint(checkpoint, data, parse_split(split), parse_domain(domain));
  const fs::path p(out);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_report(rep, p);
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << "mean Dice " << rep.mean_dice;
  if (rep.mean_assd) std::cout << "  mean ASSD " << *rep.mean_assd;
  std::cout << "  (" << rep.n_cases << " cases)\n";
  return kOk;
}

int cmd_ablate(const std::string& config, const std::vector<int>& ks, const std::string& out, const AblationOptions& base_opt,
               std::optional<long> iterations) {
  RunConfig cfg = load_run_config(config);
  if (iterations) cfg.iterations = *iterations;
  AblationOptions opt = base_opt;
  opt.k_values = ks;
  const AblationTable t = run_ablation(cfg, opt, out, &std::cerr);
  write_ablation_table(t, out);
  std::cout << format_table_markdown(t);
  return kOk;
}

int cmd_plot(const std::string& in, const std::string& out, std::uint64_t seed) {
  const PlotResult r = plot_directory(in, out, seed);
  for (const auto& f : r.files) std::cout << f.string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SynthMix unsupervised domain adaptation toolkit"};
  app.require_subcommand(1);

  std::string out, config, spec_path, checkpoint, data_dir, split = "test", domain = "target", in;
  long iterations = -1;
  std::uint64_t seed = 0;
  bool seed_given = false;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic two-modality dataset");
  gen->add_option("--spec", spec_path, "Dataset spec JSON (defaults used when omitted)")->check(CLI::ExistingFile);
  gen->add_option("--out", out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train one configuration");
  train->add_option("--config", config, "Run config JSON")->required();
  train->add_option("--out", out, "Run directory")->required();
  train->add_option("--iterations", iterations, "Override the iteration count");
  auto* train_seed = train->add_option("--seed", seed, "Override the seed");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--data", data_dir, "Dataset directory")->required();
  eval->add_option("--split", split, "train or test")->capture_default_str();
  eval->add_option("--domain", domain, "source or target")->capture_default_str();
  eval->add_option("--out", out, "Report JSON path (a CSV is written next to it)")->required();

  std::vector<int> ks{4, 8, 32};
  AblationOptions aopt;
  bool no_model0 = false, no_baseline = false, no_reuse = false;
  auto* ablate = app.add_subcommand("ablate", "Run the mask-resolution and component ablation");
  ablate->add_option("--config", config, "Base run config JSON")->required();
  ablate->add_option("--k", ks, "Mask resolutions")->delimiter(',')->capture_default_str();
  ablate->add_option("--out", out, "Output directory")->required();
  ablate->add_option("--seeds", aopt.seeds, "Seeds per configuration")->capture_default_str();
  ablate->add_option("--iterations", iterations, "Override the iteration count");
  ablate->add_flag("--source-only", aopt.source_only, "Add a no-adaptation row");
  ablate->add_flag("--mixup-baselines", aopt.mixup_baselines, "Add global Mixup and CutMix rows");
  ablate->add_flag("--no-model0", no_model0, "Skip the run without image discriminators");
  ablate->add_flag("--no-baseline", no_baseline, "Skip the run without SynthMix");
  ablate->add_flag("--no-reuse", no_reuse, "Retrain even when a matching finished run exists");

  auto* plot = app.add_subcommand("plot", "Render curves and qualitative panels");
  plot->add_option("--in", in, "Directory with run logs and reports")->required();
  plot->add_option("--out", out, "Figure directory")->required();
  plot->add_option("--seed", seed, "Plot seed (selects the panel case)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }
  seed_given = train_seed->count() > 0;
  const std::optional<long> iters = iterations >= 0 ? std::optional<long>(iterations) : std::nullopt;

  try {
    if (*gen) return cmd_gen_data(spec_path.empty() ? std::nullopt : std::optional<std::string>(spec_path), out);
    if (*train) return cmd_train(config, out, iters, seed_given ? std::optional<std::uint64_t>(seed) : std::nullopt);
    if (*eval) return cmd_eval(checkpoint, data_dir, split, domain, out);
    if (*ablate) {
      aopt.model0 = !no_model0;
      aopt.sifa_baseline = !no_baseline;
      aopt.reuse_completed = !no_reuse;
      return cmd_ablate(config, ks, out, aopt, iters);
    }
    if (*plot) return cmd_plot(in, out, seed);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOther;
}
