#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "synthmix/autograd.hpp"
#include "synthmix/layers.hpp"
#include "synthmix/losses.hpp"
#include "synthmix/rng.hpp"

using namespace synthmix;
using V = ag::Var<double>;

namespace {

Tensor<double> random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  CounterRng rng(seed, 11);
  Tensor<double> t(s);
  for (auto& v : t.vec()) v = lo + (hi - lo) * rng.uniform01();
  return t;
}

double check(const ParamList<double>& params, const std::function<V()>& f) {
  return oracle::check_gradients(params, f).max_rel_error;
}

// Plain nested-loop convolution used as reference.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, int stride, int pad) {
  const Shape xs = x.shape(), ws = w.shape();
  const int oh = (xs.h + 2 * pad - ws.h) / stride + 1, ow = (xs.w + 2 * pad - ws.w) / stride + 1;
  Tensor<double> out({xs.n, ws.n, oh, ow});
  for (int n = 0; n < xs.n; ++n)
    for (int o = 0; o < ws.n; ++o)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
          double acc = b[o];
          for (int c = 0; c < xs.c; ++c)
            for (int i = 0; i < ws.h; ++i)
              for (int j = 0; j < ws.w; ++j) {
                const int iy = y * stride - pad + i, ix = xx * stride - pad + j;
                if (iy < 0 || iy >= xs.h || ix < 0 || ix >= xs.w) continue;
                acc += w.at(o, c, i, j) * x.at(n, c, iy, ix);
              }
          out.at(n, o, y, xx) = acc;
        }
  return out;
}

}  // namespace

TEST(CounterRng, SameKeyGivesSameStream) {
  CounterRng a(7, 3), b(7, 3), c(7, 4);
  for (int i = 0; i < 16; ++i) {
    const auto va = a();
    EXPECT_EQ(va, b());
    EXPECT_NE(va, c());
  }
  EXPECT_EQ(CounterRng(1, 2).split(5)(), CounterRng(1, 2).split(5)());
  EXPECT_NE(CounterRng(1, 2).split(5)(), CounterRng(1, 2).split(6)());
}

TEST(CounterRng, Uniform01InRange) {
  CounterRng r(0, 0);
  double mean = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    mean += u;
  }
  EXPECT_NEAR(mean / 10000, 0.5, 0.02);
}

TEST(Conv2d, MatchesNaiveReference) {
  for (int stride : {1, 2}) {
    for (int pad : {0, 1, 2}) {
      const auto x = random_tensor({2, 3, 9, 7}, 1);
      const auto w = random_tensor({4, 3, 3, 3}, 2);
      const auto b = random_tensor({1, 4, 1, 1}, 3);
      const auto y = ag::conv2d(V::constant(x), V::constant(w), V::constant(b), stride, pad).value();
      const auto ref = naive_conv(x, w, b, stride, pad);
      ASSERT_EQ(y.shape(), ref.shape());
      for (std::size_t i = 0; i < y.size(); ++i) ASSERT_NEAR(y[i], ref[i], 1e-12) << "stride " << stride << " pad " << pad;
    }
  }
}

TEST(ConvTranspose2d, IsAdjointOfConv2d) {
  // <conv(x), y> == <x, conv_T(y)> with zero bias.
  const auto x = random_tensor({1, 2, 8, 8}, 4);
  const auto w = random_tensor({3, 2, 4, 4}, 5);
  const Tensor<double> zb3({1, 3, 1, 1}), zb2({1, 2, 1, 1});
  const auto cx = ag::conv2d(V::constant(x), V::constant(w), V::constant(zb3), 2, 1).value();
  const auto y = random_tensor(cx.shape(), 6);
  const auto ty = ag::conv_transpose2d(V::constant(y), V::constant(w), V::constant(zb2), 2, 1).value();
  ASSERT_EQ(ty.shape(), x.shape());
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < cx.size(); ++i) lhs += cx[i] * y[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * ty[i];
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(AutogradOps, ElementwiseGradients) {
  auto a = V::parameter(random_tensor({1, 2, 3, 3}, 7));
  auto b = V::parameter(random_tensor({1, 2, 3, 3}, 8));
  ParamList<double> p{{"a", a}, {"b", b}};
  EXPECT_LT(check(p, [&] { return ag::mean(ag::tanh(a + 2.0 * b - a)); }), 1e-6);
  EXPECT_LT(check(p, [&] { return ag::least_squares(ag::sub(a, b), Tensor<double>(a.shape(), 0.25)); }), 1e-6);
  EXPECT_LT(check(p, [&] { return ag::l1(a, b); }), 1e-6);
}

TEST(AutogradOps, LeakyReluGradientAwayFromKink) {
  Tensor<double> v = random_tensor({1, 1, 4, 4}, 9);
  for (auto& x : v.vec()) x += x >= 0 ? 0.1 : -0.1;
  auto a = V::parameter(v);
  EXPECT_LT(check({{"a", a}}, [&] { return ag::mean(ag::leaky_relu(a, 0.2)); }), 1e-6);
}

TEST(AutogradOps, ClampPassesGradientInsideOnly) {
  auto a = V::parameter(Tensor<double>({1, 1, 1, 3}, std::vector<double>{-2.0, 0.3, 2.0}));
  ag::backward(ag::mean(ag::clamp(a, -1.0, 1.0)));
  EXPECT_DOUBLE_EQ(a.grad()[0], 0.0);
  EXPECT_DOUBLE_EQ(a.grad()[1], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(a.grad()[2], 0.0);
}

TEST(AutogradOps, ConvolutionGradients) {
  CounterRng rng(1, 1);
  Conv2d<double> c(2, 3, 3, 2, 1, rng);
  ConvTranspose2d<double> t(3, 2, 4, 2, 1, rng);
  Conv2d<double> pw(2, 2, 1, 1, 0, rng);
  auto x = V::parameter(random_tensor({1, 2, 8, 8}, 10));
  ParamList<double> p{{"x", x}};
  c.collect(p, "c");
  t.collect(p, "t");
  pw.collect(p, "pw");
  const auto target = random_tensor({1, 2, 8, 8}, 11);
  EXPECT_LT(check(p, [&] { return ag::least_squares(pw(ag::tanh(t(ag::tanh(c(x))))), target); }), 1e-6);
}

TEST(AutogradOps, NormPoolUpsampleGradients) {
  auto x = V::parameter(random_tensor({1, 2, 4, 4}, 12));
  ParamList<double> p{{"x", x}};
  const auto target = random_tensor({1, 2, 8, 8}, 13);
  EXPECT_LT(check(p, [&] { return ag::least_squares(ag::upsample_bilinear(ag::instance_norm(x), 2), target); }), 1e-6);
  EXPECT_LT(check(p, [&] { return ag::least_squares(ag::global_avg_pool(x), Tensor<double>({1, 2, 1, 1}, 0.3)); }),
            1e-6);
}

TEST(AutogradOps, MaskMixSelectsAndRoutesGradient) {
  auto a = V::parameter(random_tensor({1, 1, 4, 4}, 14));
  auto b = V::parameter(random_tensor({1, 1, 4, 4}, 15));
  Tensor<double> m({1, 1, 4, 4});
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = (i % 3 == 0) ? 1.0 : 0.0;
  const auto out = ag::mask_mix(m, a, b);
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_EQ(out.value()[i], m[i] != 0 ? a.value()[i] : b.value()[i]);
  ag::backward(ag::mean(out));
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_DOUBLE_EQ(a.grad()[i], m[i] / 16.0);
    EXPECT_DOUBLE_EQ(b.grad()[i], (1.0 - m[i]) / 16.0);
  }
}

TEST(Losses, LogitLossGradients) {
  auto z = V::parameter(random_tensor({1, 1, 3, 3}, 16, -3.0, 3.0));
  Tensor<double> t({1, 1, 3, 3}), w({1, 1, 3, 3});
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<double>(i % 2);
    w[i] = (i % 3 == 0) ? 0.0 : 1.0;
  }
  ParamList<double> p{{"z", z}};
  EXPECT_LT(check(p, [&] { return ag::bce_with_logits(z, t); }), 1e-6);
  EXPECT_LT(check(p, [&] { return ag::sigmoid_least_squares(z, t, w); }), 1e-6);
}

TEST(Losses, SegmentationLossGradientAndValue) {
  auto z = V::parameter(random_tensor({1, 3, 4, 4}, 17, -2.0, 2.0));
  std::vector<int> y(16);
  for (int i = 0; i < 16; ++i) y[i] = i % 3;
  EXPECT_LT(check({{"z", z}}, [&] { return ag::segmentation_loss(z, y); }), 1e-6);
  // Uniform logits: CE = log C; soft Dice per class (2*n_c/3 + 1)/(16/3 + n_c + 1).
  auto u = V::constant(Tensor<double>({1, 3, 4, 4}, 0.0));
  double dice = 0.0;
  for (int c = 0; c < 3; ++c) {
    const double nc = c == 0 ? 6 : 5;
    dice += (2.0 * nc / 3.0 + 1.0) / (16.0 / 3.0 + nc + 1.0);
  }
  EXPECT_NEAR(ag::segmentation_loss(u, y).item(), std::log(3.0) + 1.0 - dice / 3.0, 1e-12);
  EXPECT_THROW(ag::segmentation_loss(u, std::vector<int>(16, 3)), ValidationError);
  EXPECT_THROW(ag::segmentation_loss(u, std::vector<int>(15, 0)), DimensionError);
}

TEST(Losses, ZeroWeightsGiveZeroLoss) {
  auto z = V::parameter(Tensor<double>({1, 1, 2, 2}, 1.0));
  const Tensor<double> t({1, 1, 2, 2}, 0.0), w({1, 1, 2, 2}, 0.0);
  auto l = ag::sigmoid_least_squares(z, t, w);
  EXPECT_EQ(l.item(), 0.0);
  ag::backward(l);
  for (double g : z.grad().vec()) EXPECT_EQ(g, 0.0);
}

TEST(Autograd, IntermediateNodesOutliveTheirHandles) {
  auto w = V::parameter(random_tensor({2, 1, 3, 3}, 18));
  auto b = V::parameter(Tensor<double>({1, 2, 1, 1}));
  V loss;
  {
    auto x = V::constant(random_tensor({1, 1, 6, 6}, 19));
    loss = ag::mean(ag::conv2d(x, w, b, 1, 1));
  }
  ag::backward(loss);
  EXPECT_TRUE(w.has_grad());
}

TEST(Autograd, NoGradGuardBuildsNoGraph) {
  auto a = V::parameter(Tensor<double>({1, 1, 1, 1}, 2.0));
  ag::NoGradGuard g;
  auto y = 3.0 * a;
  EXPECT_FALSE(y.requires_grad());
}

TEST(Autograd, BackwardNeedsScalar) {
  auto a = V::parameter(Tensor<double>({1, 1, 2, 2}, 1.0));
  EXPECT_THROW(ag::backward(2.0 * a), DimensionError);
}
