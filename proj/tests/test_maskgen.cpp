#include <gtest/gtest.h>

#include "synthmix/maskgen.hpp"

using namespace synthmix;

TEST(MixMaskSpec, RejectsInvalidParameters) {
  EXPECT_THROW((MixMaskSpec{0, 0.5, 64, 0}.validate()), ConfigError);
  EXPECT_THROW((MixMaskSpec{-4, 0.5, 64, 0}.validate()), ConfigError);
  EXPECT_THROW((MixMaskSpec{8, -0.1, 64, 0}.validate()), ConfigError);
  EXPECT_THROW((MixMaskSpec{8, 1.5, 64, 0}.validate()), ConfigError);
  EXPECT_THROW((MixMaskSpec{8, 0.5, 0, 0}.validate()), ConfigError);
  EXPECT_THROW((MixMaskSpec{7, 0.5, 64, 0}.validate()), ConfigError);
  EXPECT_NO_THROW((MixMaskSpec{8, 0.5, 64, 0}.validate()));
  EXPECT_EQ((MixMaskSpec{8, 0.5, 256, 0}.patch_side()), 32);
}

TEST(GenerateGrid, SameSeedAndIndexGiveSameGrid) {
  const MixMaskSpec spec{8, 0.5, 64, 42};
  EXPECT_EQ(generate_grid(spec, 3), generate_grid(spec, 3));
  EXPECT_NE(generate_grid(spec, 3), generate_grid(spec, 4));
  MixMaskSpec other = spec;
  other.seed = 43;
  EXPECT_NE(generate_grid(spec, 3), generate_grid(other, 3));
}

TEST(GenerateGrid, ExtremeRatiosAreConstant) {
  for (int i = 0; i < 20; ++i) {
    EXPECT_EQ(generate_grid(MixMaskSpec{8, 0.0, 64, 1}, i).ones(), 0u);
    EXPECT_EQ(generate_grid(MixMaskSpec{8, 1.0, 64, 1}, i).ones(), 64u);
  }
}

TEST(GenerateGrid, RatioTracksLambda) {
  for (double lambda : {0.2, 0.5, 0.8}) {
    double mean = 0.0;
    const int n = 2000;
    for (int i = 0; i < n; ++i) mean += generate_grid(MixMaskSpec{8, lambda, 64, 5}, i).mean();
    EXPECT_NEAR(mean / n, lambda, 0.01) << lambda;
  }
}

TEST(Upsample, ReplicatesBlocksAndStaysBinary) {
  for (int k : {1, 2, 4, 8, 16, 32}) {
    const MaskGrid g = generate_grid(MixMaskSpec{k, 0.5, 64, 9}, 0);
    const PixelMask m = upsample(g, 64);
    ASSERT_EQ(m.values().shape(), (Shape{1, 1, 64, 64}));
    EXPECT_EQ(m.source_grid(), g);
    const int b = 64 / k;
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        const float v = m.values()(y, x);
        ASSERT_TRUE(v == 0.0f || v == 1.0f);
        ASSERT_EQ(v, static_cast<float>(g(y / b, x / b)));
      }
    }
    EXPECT_DOUBLE_EQ(mask_mean(m), g.mean());
  }
}

TEST(Upsample, RejectsIndivisibleSide) {
  EXPECT_THROW(upsample(MaskGrid(8), 60), ConfigError);
}

TEST(MaskGrid, RejectsNonBinaryOrWrongSize) {
  EXPECT_THROW(MaskGrid(2, std::vector<std::uint8_t>{0, 1, 2, 0}), ValidationError);
  EXPECT_THROW(MaskGrid(2, std::vector<std::uint8_t>{0, 1, 0}), DimensionError);
  const MaskGrid g(2, std::vector<std::uint8_t>{0, 1, 1, 1});
  EXPECT_EQ(g.inverted(), MaskGrid(2, std::vector<std::uint8_t>{1, 0, 0, 0}));
  EXPECT_DOUBLE_EQ(g.mean(), 0.75);
}

TEST(SampleRatio, StaysInRange) {
  CounterRng rng(3, streams::kMask);
  for (int i = 0; i < 1000; ++i) {
    const double r = sample_ratio(rng);
    ASSERT_GE(r, 0.3);
    ASSERT_LE(r, 0.7);
  }
  EXPECT_THROW(sample_ratio(rng, 0.8, 0.2), ConfigError);
  EXPECT_THROW(sample_ratio(rng, -0.1, 0.2), ConfigError);
}
