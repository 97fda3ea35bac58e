#pragma once

// Mixup Inspector: an encoder-decoder patch classifier that maps an image to
// a k x k grid of domain logits (1 = target), plus an auxiliary global logit
// (4x4 conv + global average pool on the bottleneck) supervised by the mask mean.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "synthmix/layers.hpp"
#include "synthmix/losses.hpp"
#include "synthmix/maskgen.hpp"

namespace synthmix {

enum class InspectorHead {
  PatchAndGlobal,  // k x k patch map + global branch
  GlobalOnly,      // image-classifier shape, for the Mixup/CutMix baselines
};

struct InspectorConfig {
  int k = 8;
  int image_side = 128;
  int base_channels = 8;
  int depth = 4;  // stride-2 encoder stages
  InspectorHead head = InspectorHead::PatchAndGlobal;
  Activation activation = Activation::LeakyReLU;

  [[nodiscard]] int bottleneck_side() const { return image_side >> depth; }

  void validate() const {
    detail::require<ConfigError>(k > 0 && image_side > 0 && base_channels > 0 && depth > 0,
                                 "inspector config values must be positive");
    detail::require<ConfigError>(image_side % (1 << depth) == 0 && bottleneck_side() >= 2,
                                 "inspector: image side " + std::to_string(image_side) + " too small for depth " +
                                     std::to_string(depth));
    detail::require<ConfigError>(image_side % k == 0, "inspector: k must divide the image side");
    const int b = bottleneck_side();
    const int ratio = k > b ? k / b : b / k;
    detail::require<ConfigError>((k > b ? k % b : b % k) == 0 && (ratio & (ratio - 1)) == 0,
                                 "inspector: k=" + std::to_string(k) + " and bottleneck side " + std::to_string(b) +
                                     " must differ by a power of two");
  }
};

template <class T>
struct InspectorOutput {
  ag::Var<T> patch_logits;  // [1,1,k,k]
  ag::Var<T> global_logit;  // [1,1,1,1]
};

template <class T>
class Inspector {
 public:
  Inspector() = default;
  Inspector(const InspectorConfig& cfg, CounterRng rng) : cfg_(cfg) {
    cfg_.validate();
    int ch = 1;
    for (int i = 0; i < cfg_.depth; ++i) {
      const int next = cfg_.base_channels * (1 << std::min(i, 2));
      encoder_.emplace_back(ch, next, 4, 2, 1, rng);
      ch = next;
    }
    global_head_ = Conv2d<T>(ch, 1, 4, 1, 1, rng);
    if (cfg_.head == InspectorHead::PatchAndGlobal) {
      int side = cfg_.bottleneck_side();
      while (side < cfg_.k) {
        const int next = std::max(cfg_.base_channels, ch / 2);
        up_.emplace_back(ch, next, 4, 2, 1, rng);
        ch = next;
        side *= 2;
      }
      while (side > cfg_.k) {
        down_.emplace_back(ch, ch, 4, 2, 1, rng);
        side /= 2;
      }
      patch_head_ = Conv2d<T>(ch, 1, 3, 1, 1, rng);
    }
  }

  [[nodiscard]] const InspectorConfig& config() const { return cfg_; }

  InspectorOutput<T> operator()(const ag::Var<T>& image) const {
    const Shape s = image.shape();
    detail::require<DimensionError>(s.c == 1 && s.h == cfg_.image_side && s.w == cfg_.image_side,
                                    "inspector expects [N,1," + std::to_string(cfg_.image_side) + "," +
                                        std::to_string(cfg_.image_side) + "], got " + s.str());
    ag::Var<T> h = image;
    for (const auto& conv : encoder_) h = activate(conv(h), cfg_.activation);
    InspectorOutput<T> out;
    out.global_logit = ag::global_avg_pool(global_head_(h));
    if (cfg_.head == InspectorHead::PatchAndGlobal) {
      for (const auto& up : up_) h = activate(up(h), cfg_.activation);
      for (const auto& dn : down_) h = activate(dn(h), cfg_.activation);
      out.patch_logits = patch_head_(h);
    }
    return out;
  }

  void zero_init_heads() {
    global_head_.zero_init();
    if (cfg_.head == InspectorHead::PatchAndGlobal) patch_head_.zero_init();
  }

  void collect(ParamList<T>& out, std::string_view prefix) const {
    for (std::size_t i = 0; i < encoder_.size(); ++i) encoder_[i].collect(out, join_name(prefix, "enc" + std::to_string(i)));
    global_head_.collect(out, join_name(prefix, "global_head"));
    for (std::size_t i = 0; i < up_.size(); ++i) up_[i].collect(out, join_name(prefix, "up" + std::to_string(i)));
    for (std::size_t i = 0; i < down_.size(); ++i) down_[i].collect(out, join_name(prefix, "down" + std::to_string(i)));
    if (cfg_.head == InspectorHead::PatchAndGlobal) patch_head_.collect(out, join_name(prefix, "patch_head"));
  }

  [[nodiscard]] ParamList<T> params(std::string_view prefix = "inspector") const {
    ParamList<T> p;
    collect(p, prefix);
    return p;
  }

 private:
  InspectorConfig cfg_;
  std::vector<Conv2d<T>> encoder_;
  Conv2d<T> global_head_;
  std::vector<ConvTranspose2d<T>> up_;
  std::vector<Conv2d<T>> down_;
  Conv2d<T> patch_head_;
};

template <class T>
InspectorOutput<T> inspect(const Inspector<T>& net, const Tensor<T>& image) {
  return net(ag::Var<T>::constant(image));
}

/// L_cls: mean patch BCE + BCE of the global logit against `global_target`,
/// summed with equal weight.
template <class T>
ag::Var<T> inspector_loss(const InspectorOutput<T>& out, const Tensor<T>& patch_targets, double global_target) {
  detail::require<ValidationError>(global_target >= 0.0 && global_target <= 1.0,
                                   "inspector_loss: global target must lie in [0,1]");
  for (const T v : patch_targets.vec()) {
    if (v != T{0} && v != T{1}) throw ValidationError("inspector_loss: patch targets must be binary");
  }
  detail::require<DimensionError>(static_cast<bool>(out.patch_logits), "inspector_loss: output has no patch map");
  require_same_shape(out.patch_logits.value(), patch_targets, "inspector_loss");
  auto patch = ag::bce_with_logits(out.patch_logits, patch_targets);
  auto global = ag::bce_with_logits(out.global_logit, Tensor<T>::scalar(static_cast<T>(global_target)));
  return patch + global;
}

template <class T>
ag::Var<T> inspector_loss(const InspectorOutput<T>& out, const MaskGrid& patch_targets, double global_target) {
  return inspector_loss(out, patch_targets.as_tensor<T>(), global_target);
}

/// Global-branch-only loss for classifier-shaped inspectors (soft target).
template <class T>
ag::Var<T> global_inspector_loss(const InspectorOutput<T>& out, double global_target) {
  detail::require<ValidationError>(global_target >= 0.0 && global_target <= 1.0,
                                   "global target must lie in [0,1]");
  return ag::bce_with_logits(out.global_logit, Tensor<T>::scalar(static_cast<T>(global_target)));
}

/// L^mix_adv for the generators: least squares on patch probabilities, only
/// over patches holding synthetic content. On S_MIX those are mask-1 cells
/// (pushed towards target, 1); on T_MIX the mask-0 cells (pushed towards
/// source, 0). Averaged over all synthetic patches of both images; 0 if none.
template <class T>
ag::Var<T> generator_mix_adv_loss(const InspectorOutput<T>& out_s_mix, const InspectorOutput<T>& out_t_mix,
                                  const MaskGrid& grid_s, const MaskGrid& grid_t) {
  const auto& ps = out_s_mix.patch_logits.value().shape();
  const auto& pt = out_t_mix.patch_logits.value().shape();
  detail::require<DimensionError>(ps.h == grid_s.k() && ps.w == grid_s.k() && pt.h == grid_t.k() && pt.w == grid_t.k(),
                                  "generator_mix_adv_loss: inspector grid does not match mask grid");
  const Tensor<T> w_s = grid_s.as_tensor<T>();             // synthetic where mask = 1
  const Tensor<T> w_t = grid_t.inverted().as_tensor<T>();  // synthetic where mask = 0
  const double n_s = static_cast<double>(grid_s.ones());
  const double n_t = static_cast<double>(grid_t.inverted().ones());
  const double n = n_s + n_t;
  if (n == 0.0) return ag::zero_scalar<T>();
  auto l_s = ag::sigmoid_least_squares(out_s_mix.patch_logits, Tensor<T>(ps, T{1}), w_s);
  auto l_t = ag::sigmoid_least_squares(out_t_mix.patch_logits, Tensor<T>(pt, T{0}), w_t);
  return static_cast<T>(n_s / n) * l_s + static_cast<T>(n_t / n) * l_t;
}

/// L_I = lambda_I * L^mix_adv + lambda_I * L_cls.
template <class V>
V synthmix_objective(const V& mix_adv, const V& cls, double lambda_i = 0.1) {
  using S = ag::scalar_of_t<V>;
  return static_cast<S>(lambda_i) * mix_adv + static_cast<S>(lambda_i) * cls;
}

/// Per-patch accuracy of thresholded logits against binary labels.
template <class T>
double patch_accuracy(const Tensor<T>& logits, const MaskGrid& labels) {
  detail::require<DimensionError>(logits.size() == labels.cells().size(), "patch_accuracy: size mismatch");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) hit += ((logits[i] > T{0}) == (labels.cells()[i] == 1)) ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(logits.size());
}

}  // namespace synthmix
