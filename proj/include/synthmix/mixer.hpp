#pragma once

// Mixed-input composition. Every mixed image takes mask-1 pixels from the
// target-appearance image and mask-0 pixels from the source-appearance image,
// so the mask grid doubles as the per-patch domain label (1 = target).

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "synthmix/maskgen.hpp"

namespace synthmix {

using LabelMap = Tensor<std::uint8_t>;

enum class Domain { Source, Target, SynthTarget, SynthSource };

inline const char* to_string(Domain d) {
  switch (d) {
    case Domain::Source:
      return "source";
    case Domain::Target:
      return "target";
    case Domain::SynthTarget:
      return "synth_target";
    case Domain::SynthSource:
      return "synth_source";
  }
  return "?";
}

/// One image with optional segmentation labels. `supervised` is the
/// capability flag: only samples carrying it may feed a supervised loss.
struct Sample {
  std::string id;
  Tensor<float> image;  // [1,1,side,side], intensities in [-1,1]
  std::optional<LabelMap> seg_label;
  Domain domain = Domain::Source;
  bool supervised = false;

  [[nodiscard]] int side() const { return image.shape().h; }

  /// Labels for a supervised loss; throws if this sample may not be used so.
  [[nodiscard]] const LabelMap& supervision() const {
    detail::require<ProtocolError>(supervised && seg_label.has_value(),
                                   "sample '" + id + "' (" + to_string(domain) + ") carries no usable supervision");
    return *seg_label;
  }
};

enum class MixKind { Src, Tgt, UnalignedMix, SMix, TMix };

inline const char* to_string(MixKind k) {
  switch (k) {
    case MixKind::Src:
      return "SRC";
    case MixKind::Tgt:
      return "TGT";
    case MixKind::UnalignedMix:
      return "UNALIGNED_MIX";
    case MixKind::SMix:
      return "S_MIX";
    case MixKind::TMix:
      return "T_MIX";
  }
  return "?";
}

struct MixedSample {
  MixKind kind = MixKind::Src;
  Tensor<float> image;
  MaskGrid patch_domain_labels;  // 1 = target-domain content
  PixelMask mask;                // the pixel mask used to compose `image`
  std::optional<LabelMap> seg_label;

  /// Mean of the per-pixel domain labels, the global Inspector target.
  [[nodiscard]] double global_target() const { return patch_domain_labels.mean(); }
};

struct MixedBatch {
  std::vector<MixedSample> inspector_inputs;  // SRC, TGT, UNALIGNED_MIX
  std::vector<MixedSample> generator_inputs;  // S_MIX, T_MIX
};

inline bool is_inspector_kind(MixKind k) {
  return k == MixKind::Src || k == MixKind::Tgt || k == MixKind::UnalignedMix;
}
inline bool is_generator_kind(MixKind k) { return k == MixKind::SMix || k == MixKind::TMix; }

namespace detail {
inline void check_mask_shape(const PixelMask& mask, const Shape& s, const char* what) {
  require<DimensionError>(s.n == 1 && s.c == 1 && mask.values().shape().h == s.h && mask.values().shape().w == s.w,
                          std::string(what) + ": mask " + mask.values().shape().str() + " vs image " + s.str());
}
}  // namespace detail

/// x~ = M * x_t + (1 - M) * x_s, elementwise.
inline Tensor<float> mix_images(const PixelMask& mask, const Tensor<float>& x_t, const Tensor<float>& x_s) {
  require_same_shape(x_t, x_s, "mix_images");
  detail::check_mask_shape(mask, x_t.shape(), "mix_images");
  Tensor<float> out(x_t.shape());
  const auto& m = mask.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = m[i] != 0.0f ? x_t[i] : x_s[i];
  return out;
}

inline Tensor<float> mix_images(const PixelMask& mask, const Sample& x_t, const Sample& x_s) {
  return mix_images(mask, x_t.image, x_s.image);
}

/// y~ = M * y_t + (1 - M) * y_s; with a binary mask this is a per-pixel selection.
inline LabelMap mix_seg_labels(const PixelMask& mask, const LabelMap& y_t, const LabelMap& y_s) {
  require_same_shape(y_t, y_s, "mix_seg_labels");
  detail::check_mask_shape(mask, y_t.shape(), "mix_seg_labels");
  LabelMap out(y_t.shape());
  const auto& m = mask.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = m[i] != 0.0f ? y_t[i] : y_s[i];
  return out;
}

/// Per-patch domain labels for the same mix: the grid itself.
inline MaskGrid mix_domain_labels(const PixelMask& mask) { return mask.source_grid(); }

namespace detail {

inline MixedSample make_mixed(MixKind kind, const PixelMask& mask, const Sample& tgt_like, const Sample& src_like) {
  MixedSample m;
  m.kind = kind;
  m.mask = mask;
  m.image = mix_images(mask, tgt_like, src_like);
  m.patch_domain_labels = mix_domain_labels(mask);
  if (tgt_like.seg_label && src_like.seg_label) {
    m.seg_label = mix_seg_labels(mask, *tgt_like.seg_label, *src_like.seg_label);
  }
  return m;
}

}  // namespace detail

/// Builds the five per-iteration input kinds.
///
/// `src2tgt` must be the generator output for `src` and `tgt2src` the output
/// for `tgt`. `unaligned_tgt` is the real target partner for UNALIGNED_MIX;
/// when absent, `tgt` is used (it is already unpaired with `src`).
/// Grids for UNALIGNED_MIX, S_MIX and T_MIX are drawn independently from `rng`.
inline MixedBatch compose_iteration(const Sample& src, const Sample& tgt, const Sample& src2tgt,
                                    const Sample& tgt2src, const MixMaskSpec& spec, CounterRng& rng,
                                    const Sample* unaligned_tgt = nullptr) {
  spec.validate();
  detail::require<ProtocolError>(!src2tgt.image.empty() && !tgt2src.image.empty(),
                                 "compose_iteration: synthetic inputs are missing");
  detail::require<ProtocolError>(src.domain == Domain::Source && tgt.domain == Domain::Target,
                                 "compose_iteration: expected real source and real target samples");
  detail::require<ProtocolError>(src2tgt.domain == Domain::SynthTarget && tgt2src.domain == Domain::SynthSource,
                                 "compose_iteration: synthetic inputs carry the wrong domain tags");
  const Sample& partner = unaligned_tgt ? *unaligned_tgt : tgt;
  detail::require<ProtocolError>(partner.domain == Domain::Target, "unaligned partner must be a real target sample");
  for (const Sample* s : {&src, &tgt, &src2tgt, &tgt2src, &partner}) {
    detail::require<DimensionError>(s->image.shape() == Shape{1, 1, spec.image_side, spec.image_side},
                                    "compose_iteration: sample '" + s->id + "' has shape " + s->image.shape().str());
  }

  const MaskGrid zeros(spec.k, 0);
  const MaskGrid ones(spec.k, 1);
  MixedBatch batch;

  MixedSample s;
  s.kind = MixKind::Src;
  s.image = src.image;
  s.mask = upsample(zeros, spec.image_side);
  s.patch_domain_labels = zeros;
  s.seg_label = src.seg_label;
  batch.inspector_inputs.push_back(std::move(s));

  MixedSample t;
  t.kind = MixKind::Tgt;
  t.image = tgt.image;
  t.mask = upsample(ones, spec.image_side);
  t.patch_domain_labels = ones;
  t.seg_label = tgt.seg_label;
  batch.inspector_inputs.push_back(std::move(t));

  const PixelMask m_unaligned = upsample(generate_grid(spec, rng), spec.image_side);
  batch.inspector_inputs.push_back(detail::make_mixed(MixKind::UnalignedMix, m_unaligned, partner, src));

  // S_MIX: synthetic target content (mask 1) over its own source image.
  const PixelMask m_s = upsample(generate_grid(spec, rng), spec.image_side);
  MixedSample smix = detail::make_mixed(MixKind::SMix, m_s, src2tgt, src);
  // Aligned content: the source labels describe both images.
  smix.seg_label = src.seg_label;
  batch.generator_inputs.push_back(std::move(smix));

  // T_MIX: real target content (mask 1) with its own synthetic-source translation (mask 0).
  const PixelMask m_t = upsample(generate_grid(spec, rng), spec.image_side);
  MixedSample tmix = detail::make_mixed(MixKind::TMix, m_t, tgt, tgt2src);
  tmix.seg_label = tgt.seg_label;
  batch.generator_inputs.push_back(std::move(tmix));

  return batch;
}

}  // namespace synthmix
