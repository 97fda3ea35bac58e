#pragma once

// Run configuration: a versioned JSON document. Unknown keys are rejected at
// every nesting level so typos fail before any compute is spent.

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "synthmix/dataio.hpp"
#include "synthmix/gan_core.hpp"
#include "synthmix/optim.hpp"

namespace synthmix {

enum class MixupBaseline { None, GlobalMixup, CutMix };

inline const char* to_string(MixupBaseline b) {
  switch (b) {
    case MixupBaseline::None:
      return "none";
    case MixupBaseline::GlobalMixup:
      return "global_mixup";
    case MixupBaseline::CutMix:
      return "cutmix";
  }
  return "?";
}

inline MixupBaseline mixup_baseline_from_string(const std::string& s) {
  if (s == "none") return MixupBaseline::None;
  if (s == "global_mixup") return MixupBaseline::GlobalMixup;
  if (s == "cutmix") return MixupBaseline::CutMix;
  throw ConfigError("unknown mixup_baseline '" + s + "' (expected none, global_mixup or cutmix)");
}

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::LeakyReLU:
      return "leaky_relu";
    case Activation::ReLU:
      return "relu";
    case Activation::Tanh:
      return "tanh";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "leaky_relu") return Activation::LeakyReLU;
  if (s == "relu") return Activation::ReLU;
  if (s == "tanh") return Activation::Tanh;
  throw ConfigError("unknown activation '" + s + "'");
}

inline nlohmann::json to_json(const ModelConfig& m) {
  return {{"image_side", m.image_side},
          {"num_classes", m.num_classes},
          {"base_channels", m.base_channels},
          {"down_stages", m.down_stages},
          {"res_blocks", m.res_blocks},
          {"disc_channels", m.disc_channels},
          {"inspector_channels", m.inspector_channels},
          {"inspector_depth", m.inspector_depth},
          {"k", m.k},
          {"activation", to_string(m.activation)},
          {"critic_activation", to_string(m.critic_activation)},
          {"image_discriminators", m.image_discriminators},
          {"inspector", m.inspector},
          {"inspector_head", m.inspector_head == InspectorHead::PatchAndGlobal ? "patch" : "global"}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig m = {}) {
  std::string act = to_string(m.activation);
  std::string critic_act = to_string(m.critic_activation);
  std::string head = m.inspector_head == InspectorHead::PatchAndGlobal ? "patch" : "global";
  detail::StrictReader(j, "model")
      .opt("image_side", m.image_side)
      .opt("num_classes", m.num_classes)
      .opt("base_channels", m.base_channels)
      .opt("down_stages", m.down_stages)
      .opt("res_blocks", m.res_blocks)
      .opt("disc_channels", m.disc_channels)
      .opt("inspector_channels", m.inspector_channels)
      .opt("inspector_depth", m.inspector_depth)
      .opt("k", m.k)
      .opt("activation", act)
      .opt("critic_activation", critic_act)
      .opt("image_discriminators", m.image_discriminators)
      .opt("inspector", m.inspector)
      .opt("inspector_head", head)
      .done();
  m.activation = activation_from_string(act);
  m.critic_activation = activation_from_string(critic_act);
  detail::require<ConfigError>(head == "patch" || head == "global", "inspector_head must be 'patch' or 'global'");
  m.inspector_head = head == "patch" ? InspectorHead::PatchAndGlobal : InspectorHead::GlobalOnly;
  return m;
}

inline nlohmann::json to_json(const LossWeights& w) {
  return {{"lambda_cyc", w.lambda_cyc}, {"lambda_seg", w.lambda_seg}, {"lambda_adv", w.lambda_adv},
          {"lambda_I", w.lambda_i}};
}

inline LossWeights loss_weights_from_json(const nlohmann::json& j) {
  LossWeights w;
  detail::StrictReader(j, "loss_weights")
      .opt("lambda_cyc", w.lambda_cyc)
      .opt("lambda_seg", w.lambda_seg)
      .opt("lambda_adv", w.lambda_adv)
      .opt("lambda_I", w.lambda_i)
      .done();
  w.validate();
  return w;
}

/// Mask settings; the ratio is redrawn every iteration from [lambda_min, lambda_max].
struct MaskConfig {
  int k = 8;
  double lambda_min = 0.3;
  double lambda_max = 0.7;
};

struct AblationFlags {
  bool disable_image_discriminators = false;  // "Model 0"
  std::optional<int> k_override;
  bool disable_synthmix = false;              // SIFA-lite baseline
  MixupBaseline mixup_baseline = MixupBaseline::None;
  bool source_only = false;                   // no adaptation: segmentor trained on source images only
};

struct OptimConfig {
  double lr = 2e-4;           // generators, discriminators, Inspector, shared encoder
  double seg_head_lr = 1e-3;  // segmentor head
  double beta1 = 0.5;
  double beta2 = 0.999;

  [[nodiscard]] AdamConfig adam(double rate) const { return AdamConfig{rate, beta1, beta2, 1e-8}; }
};

struct RunConfig {
  static constexpr int kVersion = 1;

  int version = kVersion;
  std::filesystem::path dataset;
  std::string direction = "S2T_train_T_segmentor";
  LossWeights weights;
  MaskConfig mask;
  long iterations = 5000;
  long eval_interval = 500;
  std::uint64_t seed = 0;
  AblationFlags ablation;
  nlohmann::json model_overrides = nlohmann::json::object();
  OptimConfig optim;
  double mixup_alpha = 0.2;   // Beta(alpha, alpha) for global Mixup
  double cutmix_alpha = 1.0;  // Beta(alpha, alpha) for the CutMix area ratio
  int keep_checkpoints = 3;

  [[nodiscard]] int effective_k() const { return ablation.k_override.value_or(mask.k); }
  [[nodiscard]] bool uses_synthmix() const {
    return !ablation.disable_synthmix && !ablation.source_only && ablation.mixup_baseline == MixupBaseline::None;
  }
  [[nodiscard]] bool uses_mixup_baseline() const { return ablation.mixup_baseline != MixupBaseline::None; }
  [[nodiscard]] bool uses_inspector() const { return uses_synthmix() || uses_mixup_baseline(); }

  /// Checks values and cross-flag consistency; does not touch the file system.
  void validate() const {
    detail::require<ConfigError>(version == kVersion, "unsupported config version " + std::to_string(version) +
                                                          " (expected " + std::to_string(kVersion) + ")");
    detail::require<ConfigError>(direction == "S2T_train_T_segmentor",
                                 "direction must be S2T_train_T_segmentor, got '" + direction + "'");
    weights.validate();
    detail::require<ConfigError>(iterations >= 0, "iterations must be non-negative");
    detail::require<ConfigError>(eval_interval > 0, "eval_interval must be positive");
    detail::require<ConfigError>(mask.k > 0 && effective_k() > 0, "k must be positive");
    detail::require<ConfigError>(0.0 <= mask.lambda_min && mask.lambda_min <= mask.lambda_max && mask.lambda_max <= 1.0,
                                 "mask ratio range must satisfy 0 <= lambda_min <= lambda_max <= 1");
    detail::require<ConfigError>(keep_checkpoints >= 1, "keep_checkpoints must be at least 1");
    detail::require<ConfigError>(mixup_alpha > 0.0 && cutmix_alpha > 0.0, "mixup/cutmix alpha must be positive");
    detail::require<ConfigError>(optim.lr > 0.0 && optim.seg_head_lr > 0.0, "learning rates must be positive");
    detail::require<ConfigError>(!(ablation.disable_synthmix && uses_mixup_baseline()),
                                 "disable_synthmix and mixup_baseline are mutually exclusive");
    detail::require<ConfigError>(!(uses_mixup_baseline() && ablation.k_override),
                                 "k_override has no meaning for mixup baselines");
    detail::require<ConfigError>(
        !ablation.source_only || (!ablation.disable_synthmix && !ablation.disable_image_discriminators &&
                                  !uses_mixup_baseline() && !ablation.k_override),
        "source_only cannot be combined with other ablation flags");
  }

  /// Network configuration for a dataset of the given geometry.
  [[nodiscard]] ModelConfig model_config(int image_side, int num_classes) const {
    ModelConfig m = model_config_from_json(model_overrides);
    m.image_side = image_side;
    m.num_classes = num_classes;
    m.k = effective_k();
    m.image_discriminators = !ablation.disable_image_discriminators;
    m.inspector = uses_inspector();
    m.inspector_head = uses_mixup_baseline() ? InspectorHead::GlobalOnly : InspectorHead::PatchAndGlobal;
    if (uses_mixup_baseline()) m.k = m.image_side >> m.inspector_depth;
    return m;
  }
};

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json ab = {{"disable_D_S_D_T", c.ablation.disable_image_discriminators},
                       {"disable_synthmix", c.ablation.disable_synthmix},
                       {"mixup_baseline", to_string(c.ablation.mixup_baseline)},
                       {"source_only", c.ablation.source_only}};
  ab["k_override"] = c.ablation.k_override ? nlohmann::json(*c.ablation.k_override) : nlohmann::json(nullptr);
  return {{"version", c.version},
          {"dataset", c.dataset.generic_string()},
          {"direction", c.direction},
          {"loss_weights", to_json(c.weights)},
          {"mask", {{"k", c.mask.k}, {"lambda_min", c.mask.lambda_min}, {"lambda_max", c.mask.lambda_max}}},
          {"iterations", c.iterations},
          {"eval_interval", c.eval_interval},
          {"seed", c.seed},
          {"ablation", ab},
          {"model", c.model_overrides},
          {"optimizer",
           {{"lr", c.optim.lr}, {"seg_head_lr", c.optim.seg_head_lr}, {"beta1", c.optim.beta1}, {"beta2", c.optim.beta2}}},
          {"mixup_alpha", c.mixup_alpha},
          {"cutmix_alpha", c.cutmix_alpha},
          {"keep_checkpoints", c.keep_checkpoints}};
}

/// Parses a config. A relative dataset path is resolved against `base_dir`.
inline RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  RunConfig c;
  std::string dataset;
  detail::StrictReader(j, "config")
      .req("version", c.version)
      .req("dataset", dataset)
      .opt("direction", c.direction)
      .sub("loss_weights", [&](const nlohmann::json& v) { c.weights = loss_weights_from_json(v); })
      .sub("mask",
           [&](const nlohmann::json& v) {
             detail::StrictReader(v, "mask")
                 .opt("k", c.mask.k)
                 .opt("lambda_min", c.mask.lambda_min)
                 .opt("lambda_max", c.mask.lambda_max)
                 .done();
           })
      .opt("iterations", c.iterations)
      .opt("eval_interval", c.eval_interval)
      .opt("seed", c.seed)
      .sub("ablation",
           [&](const nlohmann::json& v) {
             std::string baseline = "none";
             nlohmann::json k = nullptr;
             detail::StrictReader(v, "ablation")
                 .opt("disable_D_S_D_T", c.ablation.disable_image_discriminators)
                 .opt("k_override", k)
                 .opt("disable_synthmix", c.ablation.disable_synthmix)
                 .opt("mixup_baseline", baseline)
                 .opt("source_only", c.ablation.source_only)
                 .done();
             c.ablation.mixup_baseline = mixup_baseline_from_string(baseline);
             if (!k.is_null()) {
               detail::require<ConfigError>(k.is_number_integer(), "ablation.k_override must be an integer or null");
               c.ablation.k_override = k.get<int>();
             }
           })
      .sub("model",
           [&](const nlohmann::json& v) {
             model_config_from_json(v);  // validates keys
             c.model_overrides = v;
           })
      .sub("optimizer",
           [&](const nlohmann::json& v) {
             detail::StrictReader(v, "optimizer")
                 .opt("lr", c.optim.lr)
                 .opt("seg_head_lr", c.optim.seg_head_lr)
                 .opt("beta1", c.optim.beta1)
                 .opt("beta2", c.optim.beta2)
                 .done();
           })
      .opt("mixup_alpha", c.mixup_alpha)
      .opt("cutmix_alpha", c.cutmix_alpha)
      .opt("keep_checkpoints", c.keep_checkpoints)
      .done();
  std::filesystem::path p(dataset);
  c.dataset = (p.is_relative() && !base_dir.empty()) ? base_dir / p : p;
  c.validate();
  return c;
}

inline nlohmann::json read_json_file(const std::filesystem::path& p) {
  std::ifstream is(p);
  detail::require<ConfigError>(static_cast<bool>(is), "cannot read " + p.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

inline RunConfig load_run_config(const std::filesystem::path& p) {
  return run_config_from_json(read_json_file(p), p.parent_path());
}

}  // namespace synthmix
