#pragma once

// Alternating optimization. Each iteration runs, in order:
//   1. generators     L^T_adv + L^S_adv + l_cyc L_cyc  [+ l_I L^mix_adv on S_MIX, T_MIX]
//   2. discriminators D_S, D_T on real vs translated images; D_f on encoder
//                     features of x^{S->T} (label 1) vs x^T (label 0)
//   3. Inspector      l_I L_cls on SRC, TGT, UNALIGNED_MIX
//   4. segmentor      l_seg L_seg(Seg(x^{S->T}), y^S) + l_adv L^{D_f}_adv on x^T features
// Ablation flags drop the relevant parts; the source-only arm runs only a
// segmentor step on raw source images.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "synthmix/baselines.hpp"
#include "synthmix/checkpoint.hpp"
#include "synthmix/config.hpp"
#include "synthmix/dataio.hpp"
#include "synthmix/gan_core.hpp"
#include "synthmix/metrics.hpp"
#include "synthmix/mixer.hpp"
#include "synthmix/optim.hpp"

namespace synthmix {

enum class Phase { Generator, Discriminator, Inspector, Segmentor };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::Generator:
      return "generator";
    case Phase::Discriminator:
      return "discriminator";
    case Phase::Inspector:
      return "inspector";
    case Phase::Segmentor:
      return "segmentor";
  }
  return "?";
}

/// Instrumentation points; all optional.
struct TrainHooks {
  /// Every Inspector forward pass, with the phase it feeds and the input kind.
  std::function<void(long iteration, Phase, MixKind)> on_inspector_input;
  /// After each optimizer phase has stepped.
  std::function<void(long iteration, Phase)> on_phase_end;
  /// Before an iteration starts; may modify the model.
  std::function<void(long iteration, ModelBundle<float>&)> before_iteration;
};

struct IterationLog {
  long iteration = 0;
  double lambda = 0.0;  // mask ratio drawn for this iteration
  std::map<std::string, double> losses;
};

struct EvalPoint {
  long iteration = 0;
  double mean_dice = 0.0;
  std::optional<double> mean_assd;
};

struct RunLog {
  std::vector<IterationLog> iterations;
  std::vector<EvalPoint> evals;
  double wall_seconds = 0.0;
};

inline nlohmann::json to_json(const RunLog& log) {
  nlohmann::json its = nlohmann::json::array();
  for (const auto& it : log.iterations) its.push_back({{"iteration", it.iteration}, {"lambda", it.lambda}, {"losses", it.losses}});
  nlohmann::json evs = nlohmann::json::array();
  for (const auto& e : log.evals) {
    evs.push_back({{"iteration", e.iteration},
                   {"mean_dice", e.mean_dice},
                   {"mean_assd", e.mean_assd ? nlohmann::json(*e.mean_assd) : nlohmann::json(nullptr)}});
  }
  return {{"iterations", its}, {"evals", evs}, {"wall_seconds", log.wall_seconds}};
}

inline RunLog run_log_from_json(const nlohmann::json& j) {
  RunLog log;
  for (const auto& it : j.at("iterations")) {
    log.iterations.push_back({it.at("iteration").get<long>(), it.at("lambda").get<double>(),
                              it.at("losses").get<std::map<std::string, double>>()});
  }
  for (const auto& e : j.at("evals")) {
    EvalPoint p{e.at("iteration").get<long>(), e.at("mean_dice").get<double>(), std::nullopt};
    if (!e.at("mean_assd").is_null()) p.mean_assd = e.at("mean_assd").get<double>();
    log.evals.push_back(p);
  }
  log.wall_seconds = j.value("wall_seconds", 0.0);
  return log;
}

/// Argmax class per pixel of [1,C,H,W] logits or probabilities.
template <class T>
LabelMap argmax_labels(const Tensor<T>& scores) {
  const Shape s = scores.shape();
  LabelMap out({1, 1, s.h, s.w});
  const std::size_t plane = s.plane();
  for (std::size_t p = 0; p < plane; ++p) {
    int best = 0;
    for (int c = 1; c < s.c; ++c) {
      if (scores[c * plane + p] > scores[best * plane + p]) best = c;
    }
    out[p] = static_cast<std::uint8_t>(best);
  }
  return out;
}

inline LabelMap predict_labels(const Segmentor<float>& seg, const Tensor<float>& image) {
  ag::NoGradGuard guard;
  return argmax_labels(seg.logits(ag::Var<float>::constant(image)).value());
}

/// Segments every sample and scores it against its ground truth.
inline EvalReport evaluate_samples(const Segmentor<float>& seg, const std::vector<Sample>& samples, int num_classes) {
  detail::require<DataError>(!samples.empty(), "no samples to evaluate");
  std::vector<CaseResult> cases;
  for (const auto& s : samples) {
    detail::require<DataError>(s.seg_label.has_value(), "sample '" + s.id + "' has no ground truth for evaluation");
    cases.push_back(evaluate_case(s.id, predict_labels(seg, s.image), *s.seg_label, num_classes));
  }
  return aggregate(std::move(cases));
}

class Trainer {
 public:
  Trainer(RunConfig cfg, const DatasetManifest& data, TrainHooks hooks = {})
      : cfg_(std::move(cfg)), hooks_(std::move(hooks)) {
    cfg_.validate();
    side_ = data.spec.image_side;
    num_classes_ = data.spec.num_classes;
    detail::require<ConfigError>(side_ % cfg_.effective_k() == 0,
                                 "k=" + std::to_string(cfg_.effective_k()) + " does not divide image side " +
                                     std::to_string(side_));
    model_cfg_ = cfg_.model_config(side_, num_classes_);
    model_ = std::make_unique<ModelBundle<float>>(model_cfg_, cfg_.seed);
    source_ = load_split(data, Domain::Source, Split::Train);
    target_ = load_split(data, Domain::Target, Split::Train);
    test_ = load_split(data, Domain::Target, Split::Test);
    detail::require<DataError>(!source_.empty() && !target_.empty(), "dataset has an empty training split");
    for (const auto& t : target_) {
      detail::require<ProtocolError>(!t.supervised && !t.seg_label, "target training sample '" + t.id + "' exposes labels");
    }

    const auto& o = cfg_.optim;
    opt_g_ = Adam<float>(model_->generator_params(), o.adam(o.lr));
    opt_d_ = Adam<float>(model_->image_discriminator_params(), o.adam(o.lr));
    opt_df_ = Adam<float>(model_->feature_discriminator_params(), o.adam(o.lr));
    opt_i_ = Adam<float>(model_->inspector_params(), o.adam(o.lr));
    opt_seg_head_ = Adam<float>(model_->seg_head_params(), o.adam(o.seg_head_lr));
    opt_seg_enc_ = Adam<float>(model_->seg_encoder_params(), o.adam(o.lr));
    all_params_ = model_->all_params();
  }

  [[nodiscard]] const RunConfig& config() const { return cfg_; }
  [[nodiscard]] const ModelConfig& model_config() const { return model_cfg_; }
  [[nodiscard]] ModelBundle<float>& model() { return *model_; }
  [[nodiscard]] const std::vector<Sample>& test_samples() const { return test_; }

  /// One full alternating iteration. Throws DivergenceError on a non-finite loss.
  IterationLog step(long it) {
    if (hooks_.before_iteration) hooks_.before_iteration(it, *model_);
    CounterRng pick = CounterRng(cfg_.seed, streams::kSampling).split(static_cast<std::uint64_t>(it));
    const Sample& src = source_[pick() % source_.size()];
    const std::size_t ti = pick() % target_.size();
    const Sample& tgt = target_[ti];
    const std::size_t ui = target_.size() > 1 ? (ti + 1 + pick() % (target_.size() - 1)) % target_.size() : ti;
    const Sample& unaligned = target_[ui];
    IterationLog log;
    log.iteration = it;
    log.lambda = sample_ratio(pick, cfg_.mask.lambda_min, cfg_.mask.lambda_max);

    if (cfg_.ablation.source_only) {
      segmentor_step(it, ag::Var<float>::constant(src.image), src, std::nullopt, log);
      return log;
    }

    auto& m = *model_;
    const auto& w = cfg_.weights;
    const auto xs = ag::Var<float>::constant(src.image);
    const auto xt = ag::Var<float>::constant(tgt.image);

    // 1. Generators.
    zero_grads(all_params_);
    const auto fake_t = m.g_s2t(xs);
    const auto fake_s = m.g_t2s(xt);
    const auto rec_s = m.g_t2s(fake_t);
    const auto rec_t = m.g_s2t(fake_s);
    auto cyc = cycle_loss(xs, xt, rec_s, rec_t);
    auto gen = static_cast<float>(w.lambda_cyc) * cyc;
    record(log, "cyc", cyc);
    if (m.d_s) {
      auto adv_t = adversarial_ls((*m.d_t)(fake_t), 1.0f);
      auto adv_s = adversarial_ls((*m.d_s)(fake_s), 1.0f);
      gen = gen + adv_t + adv_s;
      record(log, "adv_t", adv_t);
      record(log, "adv_s", adv_s);
    }
    Sample s2t{src.id + ":s2t", fake_t.value(), std::nullopt, Domain::SynthTarget, false};
    Sample t2s{tgt.id + ":t2s", fake_s.value(), std::nullopt, Domain::SynthSource, false};
    const MixMaskSpec spec{cfg_.effective_k(), log.lambda, side_, cfg_.seed};
    CounterRng mask_rng = CounterRng(cfg_.seed, streams::kMask).split(static_cast<std::uint64_t>(it));
    std::optional<MixedBatch> batch;
    std::vector<std::pair<MixKind, BaselineMix>> baseline_inputs;
    if (cfg_.uses_synthmix()) {
      batch = compose_iteration(src, tgt, s2t, t2s, spec, mask_rng, &unaligned);
      const MixedSample& smix = batch->generator_inputs.at(0);
      const MixedSample& tmix = batch->generator_inputs.at(1);
      const auto v_smix = ag::mask_mix(smix.mask.values(), fake_t, xs);
      const auto v_tmix = ag::mask_mix(tmix.mask.values(), xt, fake_s);
      const auto out_s = inspect(it, Phase::Generator, smix.kind, v_smix);
      const auto out_t = inspect(it, Phase::Generator, tmix.kind, v_tmix);
      auto mix_adv = generator_mix_adv_loss(out_s, out_t, smix.patch_domain_labels, tmix.patch_domain_labels);
      gen = gen + static_cast<float>(w.lambda_i) * mix_adv;
      record(log, "mix_adv", mix_adv);
    } else if (cfg_.uses_mixup_baseline()) {
      CounterRng brng = CounterRng(cfg_.seed, streams::kBaselineMix).split(static_cast<std::uint64_t>(it));
      auto draw = [&] {
        return cfg_.ablation.mixup_baseline == MixupBaseline::GlobalMixup ? global_mixup_mask(side_, brng, cfg_.mixup_alpha)
                                                                          : cutmix_mask(side_, brng, cfg_.cutmix_alpha);
      };
      const BaselineMix mu = draw(), ms = draw(), mt = draw();
      baseline_inputs = {{MixKind::Src, {Tensor<float>::image(side_, side_, 0.0f), 0.0}},
                         {MixKind::Tgt, {Tensor<float>::image(side_, side_, 1.0f), 1.0}},
                         {MixKind::UnalignedMix, mu}};
      const auto v_smix = ag::mask_mix(ms.mask, fake_t, xs);
      const auto v_tmix = ag::mask_mix(mt.mask, xt, fake_s);
      const auto out_s = inspect(it, Phase::Generator, MixKind::SMix, v_smix);
      const auto out_t = inspect(it, Phase::Generator, MixKind::TMix, v_tmix);
      const Tensor<float> one = Tensor<float>::scalar(1.0f);
      auto mix_adv = 0.5f * (ag::sigmoid_least_squares(out_s.global_logit, Tensor<float>::scalar(1.0f), one) +
                             ag::sigmoid_least_squares(out_t.global_logit, Tensor<float>::scalar(0.0f), one));
      gen = gen + static_cast<float>(w.lambda_i) * mix_adv;
      record(log, "mix_adv", mix_adv);
    }
    record(log, "generator_total", gen);
    ag::backward(gen);
    opt_g_.step();
    phase_end(it, Phase::Generator);

    // 2. Discriminators, on this iteration's translations.
    const auto fake_t_d = fake_t.detach();
    const auto fake_s_d = fake_s.detach();
    if (m.d_s) {
      zero_grads(all_params_);
      auto d_loss = discriminator_ls((*m.d_t)(xt), (*m.d_t)(fake_t_d)) + discriminator_ls((*m.d_s)(xs), (*m.d_s)(fake_s_d));
      record(log, "disc_image", d_loss);
      ag::backward(d_loss);
      opt_d_.step();
    }
    {
      zero_grads(all_params_);
      ag::Var<float> f_st, f_t;
      {
        ag::NoGradGuard ng;
        f_st = m.seg.encode(fake_t_d);
        f_t = m.seg.encode(xt);
      }
      auto df_loss = discriminator_ls(m.d_f(f_st), m.d_f(f_t));
      record(log, "disc_feature", df_loss);
      ag::backward(df_loss);
      opt_df_.step();
    }
    phase_end(it, Phase::Discriminator);

    // 3. Inspector, on real and unaligned inputs only.
    if (batch || !baseline_inputs.empty()) {
      zero_grads(all_params_);
      ag::Var<float> cls;
      int n = 0;
      if (batch) {
        for (const auto& in : batch->inspector_inputs) {
          const auto out = inspect(it, Phase::Inspector, in.kind, ag::Var<float>::constant(in.image));
          auto l = inspector_loss(out, in.patch_domain_labels, in.global_target());
          cls = n++ == 0 ? l : cls + l;
        }
      } else {
        for (const auto& [kind, mix] : baseline_inputs) {
          const Tensor<float> img = kind == MixKind::Src   ? src.image
                                    : kind == MixKind::Tgt ? tgt.image
                                                           : blend(mix.mask, unaligned.image, src.image);
          const auto out = inspect(it, Phase::Inspector, kind, ag::Var<float>::constant(img));
          auto l = global_inspector_loss(out, mix.target_fraction);
          cls = n++ == 0 ? l : cls + l;
        }
      }
      cls = (1.0f / static_cast<float>(n)) * cls;
      record(log, "cls", cls);
      ag::backward(static_cast<float>(w.lambda_i) * cls);
      opt_i_.step();
      phase_end(it, Phase::Inspector);
    }

    // 4. Segmentor on translated source images, with feature alignment on target.
    segmentor_step(it, fake_t_d, src, xt, log);
    return log;
  }

  /// Runs all iterations with periodic evaluation and rotated checkpoints.
  /// On divergence, writes `diverged_<iteration>.ckpt` and rethrows.
  RunLog run(const std::filesystem::path& out_dir, std::ostream* progress = nullptr) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    {
      std::ofstream os(out_dir / "config.json");
      os << to_json(cfg_).dump(2) << '\n';
    }
    CheckpointRotation rotation(out_dir, "ckpt", cfg_.keep_checkpoints);
    RunLog log;
    const auto t0 = std::chrono::steady_clock::now();
    for (long it = 0; it < cfg_.iterations; ++it) {
      try {
        log.iterations.push_back(step(it));
      } catch (const DivergenceError&) {
        save_checkpoint(out_dir / ("diverged_" + std::to_string(it) + ".ckpt"), all_params_, model_cfg_, it,
                        {{"diverged", true}});
        write_log(out_dir, log, t0);
        throw;
      }
      const long done = it + 1;
      if (done % cfg_.eval_interval == 0 || done == cfg_.iterations) {
        const EvalReport rep = evaluate_samples(model_->seg, test_, num_classes_);
        log.evals.push_back({done, rep.mean_dice, rep.mean_assd});
        rotation.save(all_params_, model_cfg_, done);
        if (progress) {
          *progress << "iter " << done << "/" << cfg_.iterations << "  target dice " << rep.mean_dice << '\n';
        }
      }
    }
    save_checkpoint(out_dir / "final.ckpt", all_params_, model_cfg_, cfg_.iterations);
    write_log(out_dir, log, t0);
    return log;
  }

  /// Scores the current segmentor on the target test split.
  [[nodiscard]] EvalReport evaluate_target_test() const { return evaluate_samples(model_->seg, test_, num_classes_); }

 private:
  InspectorOutput<float> inspect(long it, Phase phase, MixKind kind, const ag::Var<float>& image) {
    if (hooks_.on_inspector_input) hooks_.on_inspector_input(it, phase, kind);
    return (*model_->inspector)(image);
  }

  void phase_end(long it, Phase p) {
    if (hooks_.on_phase_end) hooks_.on_phase_end(it, p);
  }

  static void record(IterationLog& log, const std::string& name, const ag::Var<float>& v) {
    const double x = v.item();
    if (!std::isfinite(x)) {
      throw DivergenceError("loss '" + name + "' became non-finite at iteration " + std::to_string(log.iteration));
    }
    log.losses[name] = x;
  }

  void segmentor_step(long it, const ag::Var<float>& train_image, const Sample& src,
                      const std::optional<ag::Var<float>>& target_image, IterationLog& log) {
    auto& m = *model_;
    const auto& w = cfg_.weights;
    zero_grads(all_params_);
    auto l_seg = seg_loss(m.seg.logits(train_image), src.supervision());
    record(log, "seg", l_seg);
    auto total = static_cast<float>(w.lambda_seg) * l_seg;
    if (target_image) {
      auto feat_adv = feature_adv_loss(m.d_f, m.seg.encode(*target_image), 1.0f);
      record(log, "feat_adv", feat_adv);
      total = total + static_cast<float>(w.lambda_adv) * feat_adv;
    }
    ag::backward(total);
    opt_seg_head_.step();
    opt_seg_enc_.step();
    phase_end(it, Phase::Segmentor);
  }

  void write_log(const std::filesystem::path& out_dir, RunLog& log, std::chrono::steady_clock::time_point t0) const {
    log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ofstream os(out_dir / "runlog.json");
    os << to_json(log).dump() << '\n';
  }

  RunConfig cfg_;
  TrainHooks hooks_;
  int side_ = 0;
  int num_classes_ = 0;
  ModelConfig model_cfg_;
  std::unique_ptr<ModelBundle<float>> model_;
  std::vector<Sample> source_, target_, test_;
  Adam<float> opt_g_, opt_d_, opt_df_, opt_i_, opt_seg_head_, opt_seg_enc_;
  ParamList<float> all_params_;
};

/// Loads a checkpoint into a fresh model and evaluates one split.
inline EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint, const DatasetManifest& data, Split split,
                                      Domain domain = Domain::Target) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  detail::require<DataError>(ck.model.image_side == data.spec.image_side && ck.model.num_classes == data.spec.num_classes,
                             "checkpoint expects " + std::to_string(ck.model.image_side) + "px images with " +
                                 std::to_string(ck.model.num_classes) + " classes; dataset has " +
                                 std::to_string(data.spec.image_side) + "px and " +
                                 std::to_string(data.spec.num_classes));
  ModelBundle<float> model(ck.model, 0);
  restore_params(model.all_params(), ck);
  const auto samples = load_split(data, domain, split);
  EvalReport rep = evaluate_samples(model.seg, samples, ck.model.num_classes);
  rep.provenance = {{"checkpoint", std::filesystem::absolute(checkpoint).string()},
                    {"dataset", std::filesystem::absolute(data.root).string()},
                    {"split", to_string(split)},
                    {"domain", to_string(domain)}};
  return rep;
}

}  // namespace synthmix
