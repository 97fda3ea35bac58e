#pragma once

// Double-precision 16x16 networks with smooth activations and fixed inputs,
// small enough for exhaustive finite differences.

#include <cstdint>

#include "synthmix/gan_core.hpp"
#include "synthmix/inspector.hpp"
#include "synthmix/maskgen.hpp"

namespace fixture {

using namespace synthmix;

inline ModelConfig tiny_config() {
  ModelConfig c;
  c.image_side = 16;
  c.num_classes = 3;
  c.base_channels = 2;
  c.down_stages = 1;
  c.res_blocks = 1;
  c.disc_channels = 2;
  c.inspector_channels = 2;
  c.inspector_depth = 2;
  c.k = 4;
  c.activation = Activation::Tanh;
  c.critic_activation = Activation::Tanh;
  return c;
}

struct TinyProblem {
  ModelBundle<double> m;
  Tensor<double> x_s, x_t, x_u;
  LabelMap y_s;
  MaskGrid grid_s, grid_t, grid_u;
  LossWeights w;

  explicit TinyProblem(std::uint64_t seed = 0) : m(tiny_config(), seed) {
    CounterRng rng(seed, 99);
    // Identity generators would put every cycle difference on the |.| kink.
    // Small random heads plus a +0.2 offset per translation keep rec - x
    // near 0.4, far from both the kink and the [-1, 1] clamp.
    for (auto* g : {&m.g_s2t, &m.g_t2s}) {
      for (auto& v : g->decoder().head().weight().mutable_value().vec()) v = 0.01 * (2.0 * rng.uniform01() - 1.0);
      g->decoder().head().bias().mutable_value().fill(0.2);
    }
    const int n = 16;
    x_s = Tensor<double>::image(n, n);
    x_t = Tensor<double>::image(n, n);
    x_u = Tensor<double>::image(n, n);
    y_s = LabelMap({1, 1, n, n});
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        x_s(y, x) = 0.6 * rng.uniform01() - 0.3;
        x_t(y, x) = 0.6 * rng.uniform01() - 0.3;
        x_u(y, x) = 0.6 * rng.uniform01() - 0.3;
        y_s(y, x) = static_cast<std::uint8_t>(rng() % 3);
      }
    }
    MixMaskSpec spec{4, 0.5, n, seed};
    grid_s = generate_grid(spec, 0);
    grid_t = generate_grid(spec, 1);
    grid_u = generate_grid(spec, 2);
  }

  ag::Var<double> xs() const { return ag::Var<double>::constant(x_s); }
  ag::Var<double> xt() const { return ag::Var<double>::constant(x_t); }

  /// L_cls averaged over SRC, TGT and an unaligned mix.
  ag::Var<double> l_cls() const {
    const auto& I = *m.inspector;
    const MaskGrid zeros(4, 0), ones(4, 1);
    const Tensor<double> mu = upsample(grid_u, 16).as<double>();
    Tensor<double> x_mix(x_s.shape());
    for (std::size_t i = 0; i < x_mix.size(); ++i) x_mix[i] = mu[i] != 0 ? x_u[i] : x_s[i];
    auto a = inspector_loss(I(xs()), zeros, 0.0);
    auto b = inspector_loss(I(xt()), ones, 1.0);
    auto c = inspector_loss(I(ag::Var<double>::constant(x_mix)), grid_u, grid_u.mean());
    return (1.0 / 3.0) * (a + b + c);
  }

  /// L^mix_adv on in-graph S_MIX and T_MIX.
  ag::Var<double> l_mix_adv() const {
    const auto fake_t = m.g_s2t(xs());
    const auto fake_s = m.g_t2s(xt());
    const auto s_mix = ag::mask_mix(upsample(grid_s, 16).as<double>(), fake_t, xs());
    const auto t_mix = ag::mask_mix(upsample(grid_t, 16).as<double>(), xt(), fake_s);
    return generator_mix_adv_loss((*m.inspector)(s_mix), (*m.inspector)(t_mix), grid_s, grid_t);
  }

  ag::Var<double> l_cyc() const {
    const auto fake_t = m.g_s2t(xs());
    const auto fake_s = m.g_t2s(xt());
    return cycle_loss(xs(), xt(), m.g_t2s(fake_t), m.g_s2t(fake_s));
  }

  ag::Var<double> l_seg() const { return seg_loss(m.seg.logits(m.g_s2t(xs())), y_s); }

  LossTerms<ag::Var<double>> terms(bool with_synthmix) const {
    const auto fake_t = m.g_s2t(xs());
    const auto fake_s = m.g_t2s(xt());
    LossTerms<ag::Var<double>> t;
    t.adv_t = adversarial_ls((*m.d_t)(fake_t), 1.0);
    t.adv_s = adversarial_ls((*m.d_s)(fake_s), 1.0);
    t.cyc = cycle_loss(xs(), xt(), m.g_t2s(fake_t), m.g_s2t(fake_s));
    t.seg = seg_loss(m.seg.logits(fake_t), y_s);
    t.feat_adv = feature_adv_loss(m.d_f, m.seg.encode(xt()), 1.0);
    if (with_synthmix) {
      t.mix_adv = l_mix_adv();
      t.cls = l_cls();
    }
    return t;
  }

  ag::Var<double> l_total(bool with_synthmix = false) const {
    return total_objective(terms(with_synthmix), w, with_synthmix);
  }
};

}  // namespace fixture
