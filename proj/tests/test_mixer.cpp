#include <gtest/gtest.h>

#include "synthmix/mixer.hpp"

using namespace synthmix;

namespace {

Sample make_sample(const std::string& id, Domain d, int side, std::uint64_t seed, bool labelled) {
  CounterRng rng(seed, 77);
  Sample s;
  s.id = id;
  s.domain = d;
  s.image = Tensor<float>::image(side, side);
  for (auto& v : s.image.vec()) v = static_cast<float>(2.0 * rng.uniform01() - 1.0);
  if (labelled) {
    LabelMap y({1, 1, side, side});
    for (auto& v : y.vec()) v = static_cast<std::uint8_t>(rng() % 3);
    s.seg_label = y;
    s.supervised = d == Domain::Source || d == Domain::SynthTarget;
  }
  return s;
}

struct Quad {
  Sample src, tgt, s2t, t2s;
};

Quad make_quad(int side, std::uint64_t seed) {
  Quad q{make_sample("s", Domain::Source, side, seed, true), make_sample("t", Domain::Target, side, seed + 1, false),
         make_sample("s2t", Domain::SynthTarget, side, seed + 2, false),
         make_sample("t2s", Domain::SynthSource, side, seed + 3, false)};
  q.s2t.seg_label = q.src.seg_label;
  return q;
}

}  // namespace

TEST(MixImages, IdentitiesOverRandomCases) {
  for (int c = 0; c < 100; ++c) {
    const int side = 32;
    const Sample a = make_sample("a", Domain::Target, side, 10 * c, true);
    const Sample b = make_sample("b", Domain::Source, side, 10 * c + 1, true);
    const MixMaskSpec spec{1 << (c % 4 + 1), 0.5, side, static_cast<std::uint64_t>(c)};
    EXPECT_EQ(mix_images(upsample(MaskGrid(spec.k, 1), side), a, b), a.image);
    EXPECT_EQ(mix_images(upsample(MaskGrid(spec.k, 0), side), a, b), b.image);
    const PixelMask m = upsample(generate_grid(spec, 0), side);
    const Tensor<float> mixed = mix_images(m, a, b);
    const LabelMap ymix = mix_seg_labels(m, *a.seg_label, *b.seg_label);
    for (std::size_t i = 0; i < mixed.size(); ++i) {
      const bool t = m.values()[i] != 0.0f;
      ASSERT_EQ(mixed[i], t ? a.image[i] : b.image[i]);
      ASSERT_EQ(ymix[i], t ? (*a.seg_label)[i] : (*b.seg_label)[i]);
    }
    EXPECT_EQ(mix_domain_labels(m), m.source_grid());
  }
}

TEST(MixImages, RejectsShapeMismatch) {
  const Sample a = make_sample("a", Domain::Target, 32, 1, false);
  const Sample b = make_sample("b", Domain::Source, 16, 2, false);
  EXPECT_THROW(mix_images(upsample(MaskGrid(4, 1), 32), a, b), DimensionError);
  EXPECT_THROW(mix_images(upsample(MaskGrid(4, 1), 16), a, a), DimensionError);
}

TEST(ComposeIteration, ProducesFiveKindsInTheirGroups) {
  const Quad q = make_quad(32, 3);
  CounterRng rng(0, streams::kMask);
  const MixedBatch b = compose_iteration(q.src, q.tgt, q.s2t, q.t2s, MixMaskSpec{4, 0.5, 32, 0}, rng);
  ASSERT_EQ(b.inspector_inputs.size(), 3u);
  ASSERT_EQ(b.generator_inputs.size(), 2u);
  EXPECT_EQ(b.inspector_inputs[0].kind, MixKind::Src);
  EXPECT_EQ(b.inspector_inputs[1].kind, MixKind::Tgt);
  EXPECT_EQ(b.inspector_inputs[2].kind, MixKind::UnalignedMix);
  EXPECT_EQ(b.generator_inputs[0].kind, MixKind::SMix);
  EXPECT_EQ(b.generator_inputs[1].kind, MixKind::TMix);
  for (const auto& m : b.inspector_inputs) EXPECT_TRUE(is_inspector_kind(m.kind));
  for (const auto& m : b.generator_inputs) EXPECT_TRUE(is_generator_kind(m.kind));
  EXPECT_EQ(b.inspector_inputs[0].image, q.src.image);
  EXPECT_EQ(b.inspector_inputs[0].global_target(), 0.0);
  EXPECT_EQ(b.inspector_inputs[1].image, q.tgt.image);
  EXPECT_EQ(b.inspector_inputs[1].global_target(), 1.0);
}

TEST(ComposeIteration, DomainLabelsEqualTheMaskGrid) {
  for (int c = 0; c < 100; ++c) {
    const Quad q = make_quad(32, 100 + c);
    CounterRng rng(c, streams::kMask);
    const MixedBatch b = compose_iteration(q.src, q.tgt, q.s2t, q.t2s, MixMaskSpec{8, 0.5, 32, 0}, rng);
    const std::pair<const MixedSample*, std::pair<const Sample*, const Sample*>> cases[] = {
        {&b.inspector_inputs[2], {&q.tgt, &q.src}},
        {&b.generator_inputs[0], {&q.s2t, &q.src}},
        {&b.generator_inputs[1], {&q.tgt, &q.t2s}},
    };
    for (const auto& [mixed, parts] : cases) {
      ASSERT_EQ(mixed->patch_domain_labels, mixed->mask.source_grid());
      for (std::size_t i = 0; i < mixed->image.size(); ++i) {
        const bool t = mixed->mask.values()[i] != 0.0f;
        ASSERT_EQ(mixed->image[i], t ? parts.first->image[i] : parts.second->image[i]);
      }
    }
  }
}

TEST(ComposeIteration, AlignedSourceMixKeepsSourceLabels) {
  // S_MIX blends a source image with its own translation, so the labels
  // are the source labels whatever the mask.
  for (int c = 0; c < 100; ++c) {
    const Quad q = make_quad(32, 500 + c);
    CounterRng rng(c, streams::kMask);
    const MixedBatch b = compose_iteration(q.src, q.tgt, q.s2t, q.t2s, MixMaskSpec{4, 0.5, 32, 0}, rng);
    const MixedSample& smix = b.generator_inputs[0];
    ASSERT_TRUE(smix.seg_label.has_value());
    ASSERT_EQ(*smix.seg_label, *q.src.seg_label);
  }
}

TEST(ComposeIteration, ProtocolViolationsThrow) {
  const Quad q = make_quad(32, 7);
  const MixMaskSpec spec{4, 0.5, 32, 0};
  CounterRng rng(0, 0);
  EXPECT_THROW(compose_iteration(q.tgt, q.src, q.s2t, q.t2s, spec, rng), ProtocolError);
  EXPECT_THROW(compose_iteration(q.src, q.tgt, q.t2s, q.s2t, spec, rng), ProtocolError);
  Sample empty = q.s2t;
  empty.image = Tensor<float>();
  EXPECT_THROW(compose_iteration(q.src, q.tgt, empty, q.t2s, spec, rng), ProtocolError);
  EXPECT_THROW(compose_iteration(q.src, q.tgt, q.s2t, q.t2s, spec, rng, &q.src), ProtocolError);
  const Quad small = make_quad(16, 8);
  EXPECT_THROW(compose_iteration(q.src, small.tgt, q.s2t, q.t2s, spec, rng), DimensionError);
}

TEST(Sample, TargetSamplesRefuseSupervision) {
  Sample t = make_sample("t", Domain::Target, 8, 1, true);
  EXPECT_FALSE(t.supervised);
  EXPECT_THROW((void)t.supervision(), ProtocolError);
  const Sample s = make_sample("s", Domain::Source, 8, 2, true);
  EXPECT_NO_THROW((void)s.supervision());
}
