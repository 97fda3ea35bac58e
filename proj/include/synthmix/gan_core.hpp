#pragma once

// Scaled-down SIFA-style backbone: two residual image generators, PatchGAN
// image discriminators, a feature discriminator, and a segmentor that reuses
// the encoder of the target-to-source generator, plus the loss terms of the
// overall objective.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "synthmix/inspector.hpp"
#include "synthmix/layers.hpp"
#include "synthmix/losses.hpp"
#include "synthmix/mixer.hpp"

namespace synthmix {

struct LossWeights {
  double lambda_cyc = 10.0;
  double lambda_seg = 0.1;
  double lambda_adv = 0.1;
  double lambda_i = 0.1;

  void validate() const {
    detail::require<ConfigError>(lambda_cyc >= 0 && lambda_seg >= 0 && lambda_adv >= 0 && lambda_i >= 0,
                                 "loss weights must be non-negative");
  }
};

struct ModelConfig {
  int image_side = 128;
  int num_classes = 3;
  int base_channels = 8;   // generator stem width; bottleneck is twice this
  int down_stages = 2;     // stride-2 encoder stages
  int res_blocks = 3;
  int disc_channels = 8;
  int inspector_channels = 8;
  int inspector_depth = 4;
  int k = 8;
  Activation activation = Activation::LeakyReLU;
  Activation critic_activation = Activation::LeakyReLU;  // discriminators and Inspector
  bool image_discriminators = true;  // false reproduces the "no D_S, D_T" ablation
  bool inspector = true;
  InspectorHead inspector_head = InspectorHead::PatchAndGlobal;

  [[nodiscard]] int feature_channels() const { return 2 * base_channels; }
  [[nodiscard]] int feature_side() const { return image_side >> down_stages; }

  void validate() const {
    detail::require<ConfigError>(image_side > 0 && num_classes >= 2 && base_channels > 0 && down_stages >= 1 &&
                                     res_blocks >= 0 && disc_channels > 0,
                                 "invalid model config");
    detail::require<ConfigError>(image_side % (1 << down_stages) == 0,
                                 "image side must be divisible by 2^down_stages");
    if (inspector) inspector_config().validate();
  }

  [[nodiscard]] InspectorConfig inspector_config() const {
    return InspectorConfig{k, image_side, inspector_channels, inspector_depth, inspector_head, critic_activation};
  }
};

enum class Direction { S2T, T2S };

/// Stride-2 stem, further stride-2 stages, then residual blocks; all
/// instance-normalized. Output side is image_side / 2^down_stages.
template <class T>
class Encoder {
 public:
  Encoder(const ModelConfig& cfg, CounterRng& rng) : act_(cfg.activation) {
    const int b = cfg.base_channels;
    stem_ = Conv2d<T>(1, b, 3, 2, 1, rng);
    int ch = b;
    for (int i = 1; i < cfg.down_stages; ++i) {
      const int next = 2 * b;
      down_.emplace_back(ch, next, 3, 2, 1, rng);
      ch = next;
    }
    if (ch != cfg.feature_channels()) {
      down_.emplace_back(ch, cfg.feature_channels(), 3, 1, 1, rng);
      ch = cfg.feature_channels();
    }
    for (int i = 0; i < cfg.res_blocks; ++i) {
      res_.push_back({Conv2d<T>(ch, ch, 3, 1, 1, rng), Conv2d<T>(ch, ch, 3, 1, 1, rng)});
    }
  }

  ag::Var<T> operator()(const ag::Var<T>& x) const {
    ag::Var<T> h = activate(ag::instance_norm(stem_(x)), act_);
    for (const auto& d : down_) h = activate(ag::instance_norm(d(h)), act_);
    for (const auto& [c1, c2] : res_) {
      ag::Var<T> r = activate(ag::instance_norm(c1(h)), act_);
      h = h + ag::instance_norm(c2(r));
    }
    return h;
  }

  void collect(ParamList<T>& out, std::string_view prefix) const {
    stem_.collect(out, join_name(prefix, "stem"));
    for (std::size_t i = 0; i < down_.size(); ++i) down_[i].collect(out, join_name(prefix, "down" + std::to_string(i)));
    for (std::size_t i = 0; i < res_.size(); ++i) {
      res_[i].first.collect(out, join_name(prefix, "res" + std::to_string(i) + ".a"));
      res_[i].second.collect(out, join_name(prefix, "res" + std::to_string(i) + ".b"));
    }
  }

 private:
  Activation act_;
  Conv2d<T> stem_;
  std::vector<Conv2d<T>> down_;
  std::vector<std::pair<Conv2d<T>, Conv2d<T>>> res_;
};

/// Transposed-conv upsampling back to image resolution; the last stage
/// (the head) emits the one-channel residual directly.
template <class T>
class Decoder {
 public:
  Decoder(const ModelConfig& cfg, CounterRng& rng) : act_(cfg.activation) {
    int ch = cfg.feature_channels();
    for (int i = 1; i < cfg.down_stages; ++i) {
      const int next = cfg.base_channels;
      up_.emplace_back(ch, next, 4, 2, 1, rng);
      ch = next;
    }
    head_ = ConvTranspose2d<T>(ch, 1, 4, 2, 1, rng);
  }

  ag::Var<T> operator()(const ag::Var<T>& features) const {
    ag::Var<T> h = features;
    for (const auto& u : up_) h = activate(ag::instance_norm(u(h)), act_);
    return head_(h);
  }

  ConvTranspose2d<T>& head() { return head_; }

  void collect(ParamList<T>& out, std::string_view prefix) const {
    for (std::size_t i = 0; i < up_.size(); ++i) up_[i].collect(out, join_name(prefix, "up" + std::to_string(i)));
    head_.collect(out, join_name(prefix, "head"));
  }

 private:
  Activation act_;
  std::vector<ConvTranspose2d<T>> up_;
  ConvTranspose2d<T> head_;
};

/// Residual image translator: out = clamp(x + decoder(encoder(x)), -1, 1).
template <class T>
class Generator {
 public:
  Generator(const ModelConfig& cfg, CounterRng rng)
      : encoder_(std::make_shared<Encoder<T>>(cfg, rng)), decoder_(cfg, rng) {}

  ag::Var<T> operator()(const ag::Var<T>& x) const { return decode(encode(x), x); }

  ag::Var<T> encode(const ag::Var<T>& x) const { return (*encoder_)(x); }
  ag::Var<T> decode(const ag::Var<T>& features, const ag::Var<T>& x) const {
    return ag::clamp(x + decoder_(features), T(-1), T(1));
  }

  /// Zero residual head: the generator starts as the identity map.
  void identity_init() { decoder_.head().zero_init(); }

  [[nodiscard]] const std::shared_ptr<Encoder<T>>& encoder() const { return encoder_; }
  Decoder<T>& decoder() { return decoder_; }

  void collect(ParamList<T>& out, std::string_view prefix) const {
    encoder_->collect(out, join_name(prefix, "enc"));
    decoder_.collect(out, join_name(prefix, "dec"));
  }

 private:
  std::shared_ptr<Encoder<T>> encoder_;
  Decoder<T> decoder_;
};

/// Segmentor: a shared encoder followed by one conv head and bilinear
/// upsampling back to image resolution. Produces logits.
template <class T>
class Segmentor {
 public:
  Segmentor(std::shared_ptr<Encoder<T>> encoder, const ModelConfig& cfg, CounterRng rng)
      : encoder_(std::move(encoder)), head_(cfg.feature_channels(), cfg.num_classes, 3, 1, 1, rng),
        factor_(1 << cfg.down_stages) {}

  ag::Var<T> logits(const ag::Var<T>& x) const { return logits_from_features(encode(x)); }
  ag::Var<T> encode(const ag::Var<T>& x) const { return (*encoder_)(x); }
  ag::Var<T> logits_from_features(const ag::Var<T>& f) const { return ag::upsample_bilinear(head_(f), factor_); }

  void uniform_init() { head_.zero_init(); }

  [[nodiscard]] const std::shared_ptr<Encoder<T>>& encoder() const { return encoder_; }

  void collect_head(ParamList<T>& out, std::string_view prefix) const { head_.collect(out, join_name(prefix, "head")); }

 private:
  std::shared_ptr<Encoder<T>> encoder_;
  Conv2d<T> head_;
  int factor_;
};

/// PatchGAN discriminator with raw (least-squares) scores.
template <class T>
class PatchDiscriminator {
 public:
  PatchDiscriminator(int in_channels, int width, int stages, CounterRng rng,
                     Activation act = Activation::LeakyReLU)
      : act_(act) {
    int ch = in_channels;
    for (int i = 0; i < stages; ++i) {
      const int next = width * (1 << std::min(i, 2));
      body_.emplace_back(ch, next, 4, 2, 1, rng);
      ch = next;
    }
    head_ = Conv2d<T>(ch, 1, 3, 1, 1, rng);
  }

  ag::Var<T> operator()(const ag::Var<T>& x) const {
    ag::Var<T> h = x;
    for (const auto& c : body_) h = activate(c(h), act_);
    return head_(h);
  }

  void zero_init_head() { head_.zero_init(); }

  void collect(ParamList<T>& out, std::string_view prefix) const {
    for (std::size_t i = 0; i < body_.size(); ++i) body_[i].collect(out, join_name(prefix, "c" + std::to_string(i)));
    head_.collect(out, join_name(prefix, "head"));
  }

 private:
  Activation act_;
  std::vector<Conv2d<T>> body_;
  Conv2d<T> head_;
};

/// All networks of one run. D_S/D_T and the Inspector are optional so the
/// ablations construct no parameters for disabled parts.
template <class T>
class ModelBundle {
  ModelConfig cfg_;

 public:
  explicit ModelBundle(const ModelConfig& cfg, std::uint64_t seed = 0)
      : cfg_((cfg.validate(), cfg)),
        g_s2t(cfg, CounterRng(seed, streams::kInit).split(1)),
        g_t2s(cfg, CounterRng(seed, streams::kInit).split(2)),
        seg(g_t2s.encoder(), cfg, CounterRng(seed, streams::kInit).split(3)),
        d_f(cfg.feature_channels(), cfg.disc_channels, 2, CounterRng(seed, streams::kInit).split(6), cfg.critic_activation) {
    if (cfg.image_discriminators) {
      d_s.emplace(1, cfg.disc_channels, 3, CounterRng(seed, streams::kInit).split(4), cfg.critic_activation);
      d_t.emplace(1, cfg.disc_channels, 3, CounterRng(seed, streams::kInit).split(5), cfg.critic_activation);
    }
    if (cfg.inspector) inspector.emplace(cfg.inspector_config(), CounterRng(seed, streams::kInit).split(7));
    g_s2t.identity_init();
    g_t2s.identity_init();
  }

  ModelBundle(const ModelBundle&) = delete;
  ModelBundle& operator=(const ModelBundle&) = delete;

  [[nodiscard]] const ModelConfig& config() const { return cfg_; }

  Generator<T> g_s2t;
  Generator<T> g_t2s;
  Segmentor<T> seg;  // shares g_t2s's encoder
  std::optional<PatchDiscriminator<T>> d_s;
  std::optional<PatchDiscriminator<T>> d_t;
  PatchDiscriminator<T> d_f;
  std::optional<Inspector<T>> inspector;

  ag::Var<T> translate(const ag::Var<T>& x, Direction dir) const { return dir == Direction::S2T ? g_s2t(x) : g_t2s(x); }

  [[nodiscard]] ParamList<T> generator_params() const {
    ParamList<T> p;
    g_s2t.collect(p, "g_s2t");
    g_t2s.collect(p, "g_t2s");
    return p;
  }
  [[nodiscard]] ParamList<T> shared_encoder_params() const {
    ParamList<T> p;
    g_t2s.encoder()->collect(p, "g_t2s.enc");
    return p;
  }
  [[nodiscard]] ParamList<T> seg_encoder_params() const {
    ParamList<T> p;
    seg.encoder()->collect(p, "seg.enc");
    return p;
  }
  [[nodiscard]] ParamList<T> seg_head_params() const {
    ParamList<T> p;
    seg.collect_head(p, "seg");
    return p;
  }
  [[nodiscard]] ParamList<T> image_discriminator_params() const {
    ParamList<T> p;
    if (d_s) d_s->collect(p, "d_s");
    if (d_t) d_t->collect(p, "d_t");
    return p;
  }
  [[nodiscard]] ParamList<T> feature_discriminator_params() const {
    ParamList<T> p;
    d_f.collect(p, "d_f");
    return p;
  }
  [[nodiscard]] ParamList<T> inspector_params() const {
    return inspector ? inspector->params("inspector") : ParamList<T>{};
  }

  /// Every parameter exactly once, with stable names (checkpoint order).
  [[nodiscard]] ParamList<T> all_params() const {
    ParamList<T> p = generator_params();
    for (auto& x : seg_head_params()) p.push_back(x);
    for (auto& x : image_discriminator_params()) p.push_back(x);
    for (auto& x : feature_discriminator_params()) p.push_back(x);
    for (auto& x : inspector_params()) p.push_back(x);
    return p;
  }
};

// ---------------------------------------------------------------------------
// Loss terms

template <class T>
ag::Var<T> translate(const ModelBundle<T>& m, const Tensor<T>& image, Direction dir) {
  return m.translate(ag::Var<T>::constant(image), dir);
}

/// Per-pixel class probabilities.
template <class T>
Tensor<T> segment(const Segmentor<T>& seg, const Tensor<T>& image) {
  ag::NoGradGuard guard;
  return ag::softmax_channels(seg.logits(ag::Var<T>::constant(image)).value());
}

/// Least-squares adversarial term: mean (score - target)^2.
template <class T>
ag::Var<T> adversarial_ls(const ag::Var<T>& scores, T target) {
  return ag::least_squares(scores, target);
}

/// Discriminator objective: real -> 1, fake -> 0, averaged.
template <class T>
ag::Var<T> discriminator_ls(const ag::Var<T>& real_scores, const ag::Var<T>& fake_scores) {
  return T(0.5) * (ag::least_squares(real_scores, T{1}) + ag::least_squares(fake_scores, T{0}));
}

/// L_cyc = mean|rec_s - x_s| + mean|rec_t - x_t|
template <class T>
ag::Var<T> cycle_loss(const ag::Var<T>& x_s, const ag::Var<T>& x_t, const ag::Var<T>& rec_s, const ag::Var<T>& rec_t) {
  return ag::l1(rec_s, x_s) + ag::l1(rec_t, x_t);
}

template <class T>
ag::Var<T> seg_loss(const ag::Var<T>& logits, const LabelMap& y) {
  detail::require<DimensionError>(y.size() == logits.shape().plane() * logits.shape().n,
                                  "seg_loss: label map does not match prediction");
  std::vector<int> labels(y.vec().begin(), y.vec().end());
  return ag::segmentation_loss(logits, labels);
}

/// Feature-level adversarial term: least squares of D_f scores against `target`.
template <class T>
ag::Var<T> feature_adv_loss(const PatchDiscriminator<T>& d_f, const ag::Var<T>& features, T target) {
  return ag::least_squares(d_f(features), target);
}

/// Loss terms of the overall objective, as numbers or graph nodes.
template <class V>
struct LossTerms {
  V adv_t{};     // L^T_adv
  V adv_s{};     // L^S_adv
  V cyc{};       // L_cyc
  V seg{};       // L_seg
  V feat_adv{};  // L^{D_f}_adv
  V mix_adv{};   // L^mix_adv
  V cls{};       // L_cls
};

/// L = L^T_adv + L^S_adv + l_cyc L_cyc + l_seg L_seg + l_adv L^{D_f}_adv
///     [+ l_I L^mix_adv + l_I L_cls when `with_synthmix`].
template <class V>
V total_objective(const LossTerms<V>& t, const LossWeights& w, bool with_synthmix = false) {
  using S = ag::scalar_of_t<V>;
  V total = t.adv_t + t.adv_s + static_cast<S>(w.lambda_cyc) * t.cyc + static_cast<S>(w.lambda_seg) * t.seg +
            static_cast<S>(w.lambda_adv) * t.feat_adv;
  if (with_synthmix) total = total + synthmix_objective(t.mix_adv, t.cls, w.lambda_i);
  return total;
}

}  // namespace synthmix
