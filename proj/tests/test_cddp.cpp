#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include "cldyn/data/synthetic.hpp"
#include "cldyn/model/cddp.hpp"
#include "test_util.hpp"

using namespace cldyn;

namespace {

CddpConfig tiny_cddp_cfg(std::size_t R) {
  CddpConfig cfg;
  cfg.ssm.latent_dim = 2;
  cfg.ssm.obs_dim = 1;
  cfg.ssm.context_len = 2;
  cfg.ssm.transition_hidden = 4;
  cfg.memory_size = R;
  cfg.alpha0 = 1.0;
  return cfg;
}

Sequence tiny_seq(std::uint64_t seed, std::size_t T = 4) {
  Sequence s;
  s.values = Matrix(T, 1);
  Rng rng(seed);
  for (auto& v : s.values.data) v = rng.normal();
  s.dt = 0.1;
  return s;
}

}  // namespace

TEST_CASE("cddp_elbo with R=1 equals the control-augmented bssm elbo bit for bit") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng mrng(seed);
    CddpModel m = CddpModel::make(tiny_cddp_cfg(1), mrng);
    Sequence seq = tiny_seq(seed + 100);
    Rng r1(seed + 7), r2(seed + 7);
    ElboBreakdown a = cddp_elbo(m, seq, r1).values();
    ElboBreakdown b = bssm_elbo_fixed_mode(m, 0, seq, r2).values();
    CHECK(a.recon == b.recon);
    CHECK(a.kl_x0 == b.kl_x0);
    CHECK(a.kl_theta == b.kl_theta);
    CHECK(a.kl_pi == 0.0);
    CHECK(a.total == b.total);
  }
}

TEST_CASE("mode_posterior: identical slots give uniform weights that sum to 1") {
  Rng mrng(1);
  CddpModel m = CddpModel::make(tiny_cddp_cfg(4), mrng);
  m.memory.slots.values_mut().assign(m.memory.slots.size(), 0.3);
  Matrix ctx(2, 1);
  ctx.at(0, 0) = 0.5;
  ctx.at(1, 0) = -0.5;
  AttentionWeights w = mode_posterior(m, ctx);
  double total = 0.0;
  for (double v : w.w) {
    CHECK(v == Catch::Approx(0.25));
    total += v;
  }
  CHECK(total == Catch::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("mode_init_posterior zero-weight closed form and positivity") {
  Rng mrng(2);
  CddpModel m = CddpModel::make(tiny_cddp_cfg(2), mrng);
  for (auto& v : m.v1.W.values_mut()) v = 0.0;
  m.v1.b.values_mut() = {0.7, -0.2};
  for (auto& v : m.v2.W.values_mut()) v = 0.0;
  m.v2.b.values_mut() = {0.4, -3.0};
  GaussianDiag g = mode_init_posterior(m, {0.1, 0.2}, {0.3, 0.4});
  CHECK(g.mean[0] == 0.7);
  CHECK(g.mean[1] == -0.2);
  CHECK(g.var[0] == Catch::Approx(std::log1p(std::exp(0.4)) + 1e-6));
  CHECK(g.var[1] == Catch::Approx(std::log1p(std::exp(-3.0)) + 1e-6));
  for (double v : g.var) CHECK(v > 0.0);
}

TEST_CASE("mode_init_posterior gradient matches FD") {
  Rng mrng(3);
  CddpModel m = CddpModel::make(tiny_cddp_cfg(2), mrng);
  Tensor slot = Tensor::leaf({2}, mrng.normal_vec(2), true);
  Tensor d = Tensor::leaf({2}, mrng.normal_vec(2), true);
  std::vector<Tensor> params{slot, d, m.v1.W, m.v1.b, m.v2.W, m.v2.b};
  auto loss = [&]() {
    GaussPair g = mode_init_posterior_t(m, slot, d);
    return add(sum(g.mean), sum(g.var));
  };
  auto f = [&]() {
    NoGradGuard ng;
    return loss().item();
  };
  auto analytic = grad(loss(), params);
  auto fd = test::finite_diff(f, params);
  CHECK(test::max_rel_error(analytic, fd) < 1e-5);
}

TEST_CASE("cddp_elbo recon is a convex combination of per-mode recons") {
  Rng mrng(4);
  CddpModel m = CddpModel::make(tiny_cddp_cfg(3), mrng);
  Sequence seq = tiny_seq(10);
  Rng r1(5);
  ElboBreakdown full = cddp_elbo(m, seq, r1).values();
  CHECK(full.kl_pi >= 0.0);
  CHECK(full.kl_x0 >= 0.0);
  // replay the same stream through the fixed-mode elbo for each mode
  std::vector<double> mode_recons;
  {
    Rng r2(5);
    // consume theta exactly as cddp_elbo does, then per-mode x0 + rollout
    Matrix ctx = seq.values.rows_range(0, 2);
    Tensor d = encode_context_t(m.ssm, ctx);
    Tensor w = attention_t(m.memory.slots, d);
    Tensor theta = sample_theta_t(m.ssm, r2);
    auto tw = slice_theta(m.ssm, theta);
    for (std::size_t r = 0; r < 3; ++r) {
      Tensor slot = m.slot_t(r);
      GaussPair q0 = mode_init_posterior_t(m, slot, d);
      Tensor x0 = sample_gaussian_t(q0.mean, q0.var, r2);
      mode_recons.push_back(
          rollout_loglik_t(m.ssm, seq.values, tw, x0, slot, r2).item());
    }
  }
  const double lo = *std::min_element(mode_recons.begin(), mode_recons.end());
  const double hi = *std::max_element(mode_recons.begin(), mode_recons.end());
  CHECK(full.recon >= lo - 1e-9);
  CHECK(full.recon <= hi + 1e-9);
}

TEST_CASE("identical slots make kl_pi the uniform-vs-stick KL exactly") {
  Rng mrng(6);
  CddpModel m = CddpModel::make(tiny_cddp_cfg(4), mrng);
  m.memory.slots.values_mut().assign(m.memory.slots.size(), 1.3);
  Sequence seq = tiny_seq(11);
  Rng r1(7);
  ElboBreakdown v = cddp_elbo(m, seq, r1).values();
  AttentionWeights uniform{{0.25, 0.25, 0.25, 0.25}};
  const double expect = dp_kl(uniform, stick_prior(1.0, 4));
  CHECK(v.kl_pi == Catch::Approx(expect).epsilon(1e-14));
}

TEST_CASE("cddp_elbo full gradient matches FD (R=2, K=2, T=3, seeds 0-9)") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng mrng(seed);
    CddpConfig cfg = tiny_cddp_cfg(2);
    cfg.ssm.transition_hidden = 3;
    CddpModel m = CddpModel::make(cfg, mrng);
    Sequence seq = tiny_seq(seed + 40, 3);
    std::vector<Tensor> params = m.parameters();
    const std::uint64_t elbo_seed = seed + 900;
    auto f = [&]() {
      NoGradGuard ng;
      Rng erng(elbo_seed);
      return cddp_elbo(m, seq, erng).total.item();
    };
    Rng erng(elbo_seed);
    auto analytic = grad(cddp_elbo(m, seq, erng).total, params);
    auto fd = test::finite_diff(f, params);
    CHECK(test::max_rel_error(analytic, fd) < 1e-4);
  }
}

TEST_CASE("slots are in the parameter list only when trainable") {
  Rng mrng(8);
  CddpModel learned = CddpModel::make(tiny_cddp_cfg(3), mrng);
  bool found = false;
  for (const auto& p : learned.parameters())
    if (p.node() == learned.memory.slots.node()) found = true;
  CHECK(found);
  CddpModel frozen = learned;
  frozen.memory = EpisodicMemory::constant(3, 2, 0.0, 1.0);
  frozen.train_slots = false;
  for (const auto& p : frozen.parameters()) CHECK(p.node() != frozen.memory.slots.node());
}

TEST_CASE("posterior_predictive with a degenerate weight ignores the dead mode") {
  Rng mrng(9);
  CddpModel m = CddpModel::make(tiny_cddp_cfg(2), mrng);
  // slot 0 aligned with the descriptor at huge scale: softmax saturates to (1, 0)
  Matrix ctx(2, 1);
  ctx.at(0, 0) = 1.0;
  ctx.at(1, 0) = 0.5;
  auto d = encode_context(m.ssm, ctx);
  const double norm = std::sqrt(d[0] * d[0] + d[1] * d[1]);
  for (std::size_t k = 0; k < 2; ++k) {
    m.memory.slots.values_mut()[k] = 3000.0 * d[k] / (norm * norm);
    m.memory.slots.values_mut()[2 + k] = -3000.0 * d[k] / (norm * norm);
  }
  AttentionWeights w = mode_posterior(m, ctx);
  REQUIRE(w.w[0] == 1.0);
  REQUIRE(w.w[1] == 0.0);
  Rng p1(12), p2(12);
  Predictive mix = posterior_predictive(m, ctx, 3, 8, p1);
  Predictive only0 = predict_fixed_mode(m, 0, ctx, 3, 8, p2);
  for (std::size_t i = 0; i < mix.mean.data.size(); ++i) {
    CHECK(mix.mean.data[i] == Catch::Approx(only0.mean.data[i]).margin(1e-12));
    CHECK(mix.var.data[i] == Catch::Approx(only0.var.data[i]).margin(1e-9));
  }
}

TEST_CASE("posterior_predictive matches pooled statistics over modes") {
  Rng mrng(10);
  CddpModel m = CddpModel::make(tiny_cddp_cfg(3), mrng);
  Matrix ctx(2, 1);
  ctx.at(0, 0) = -0.3;
  ctx.at(1, 0) = 0.9;
  const std::size_t H = 3, N = 4000;
  Rng prng(13);
  Predictive p = posterior_predictive(m, ctx, H, N, prng);
  REQUIRE(p.paths.size() == 3 * N);
  REQUIRE(p.mode_weights.size() == 3);
  // recompute the mixture from the raw paths (mode-major order)
  for (std::size_t h = 0; h < H; ++h) {
    double mean = 0.0, second = 0.0;
    for (std::size_t r = 0; r < 3; ++r) {
      double mr = 0.0, sr = 0.0;
      for (std::size_t s = 0; s < N; ++s) {
        const double v = p.paths[r * N + s].at(h, 0);
        mr += v / N;
        sr += v * v / N;
      }
      mean += p.mode_weights[r] * mr;
      second += p.mode_weights[r] * (sr + m.ssm.cfg.obs_var);
    }
    const double var = second - mean * mean;
    CHECK(p.mean.at(h, 0) == Catch::Approx(mean).margin(1e-10));
    CHECK(p.var.at(h, 0) == Catch::Approx(var).margin(1e-10));
  }
}

TEST_CASE("posterior_predictive mean is invariant to jointly permuting slots") {
  Rng mrng(11);
  CddpModel m = CddpModel::make(tiny_cddp_cfg(3), mrng);
  Matrix ctx(2, 1);
  ctx.at(0, 0) = 0.2;
  ctx.at(1, 0) = 0.4;
  AttentionWeights w = mode_posterior(m, ctx);
  CddpModel permuted = m;
  permuted.memory = m.memory;
  permuted.memory.slots = Tensor::leaf({3, 2}, std::vector<double>(6));
  const std::vector<std::size_t> perm{2, 0, 1};
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t k = 0; k < 2; ++k)
      permuted.memory.slots.values_mut()[r * 2 + k] =
          m.memory.slots.values()[perm[r] * 2 + k];
  AttentionWeights w2 = mode_posterior(permuted, ctx);
  for (std::size_t r = 0; r < 3; ++r)
    CHECK(w2.w[r] == Catch::Approx(w.w[perm[r]]).epsilon(1e-12));
  // high-sample predictive means agree within MC error
  Rng p1(14), p2(15);
  Predictive a = posterior_predictive(m, ctx, 2, 6000, p1);
  Predictive b = posterior_predictive(permuted, ctx, 2, 6000, p2);
  for (std::size_t i = 0; i < a.mean.data.size(); ++i)
    CHECK(a.mean.data[i] == Catch::Approx(b.mean.data[i]).margin(0.05));
}

TEST_CASE("observe_and_write changes the memory hash and respects freezing") {
  Rng mrng(12);
  CddpModel m = CddpModel::make(tiny_cddp_cfg(3), mrng);
  Sequence seq = tiny_seq(21);
  const std::uint64_t before = memory_hash(m.memory);
  observe_and_write(m, seq);
  CHECK(memory_hash(m.memory) != before);
  freeze(m.memory);
  CHECK_THROWS_AS(observe_and_write(m, seq), MemoryFrozenError);
}

TEST_CASE("one epoch of sine writes spreads over at least two slots") {
  DatasetSuite suite = build_synthetic_suite(SystemKind::Sine, 2);
  Rng mrng(13);
  CddpConfig cfg = tiny_cddp_cfg(8);
  cfg.ssm.latent_dim = 4;
  cfg.ssm.context_len = 5;
  cfg.ssm.transition_hidden = 8;
  CddpModel m = CddpModel::make(cfg, mrng);
  std::set<std::size_t> winners;
  for (const auto& seq : suite.tasks[0].train) {
    observe_and_write(m, seq);
    Matrix ctx = seq.values.rows_range(0, 5);
    AttentionWeights w = mode_posterior(m, ctx);
    winners.insert(static_cast<std::size_t>(
        std::max_element(w.w.begin(), w.w.end()) - w.w.begin()));
  }
  CHECK(winners.size() >= 2);
}

TEST_CASE("zeroing the winning slot changes the predictive mean") {
  Rng mrng(14);
  CddpModel m = CddpModel::make(tiny_cddp_cfg(3), mrng);
  for (auto& v : m.memory.slots.values_mut()) v *= 10.0;  // make slots matter
  Matrix ctx(2, 1);
  ctx.at(0, 0) = 0.8;
  ctx.at(1, 0) = -0.1;
  AttentionWeights w = mode_posterior(m, ctx);
  const std::size_t winner = static_cast<std::size_t>(
      std::max_element(w.w.begin(), w.w.end()) - w.w.begin());
  Rng p1(16), p2(16);
  Predictive before = posterior_predictive(m, ctx, 3, 64, p1);
  for (std::size_t k = 0; k < 2; ++k) m.memory.slots.values_mut()[winner * 2 + k] = 0.0;
  Predictive after = posterior_predictive(m, ctx, 3, 64, p2);
  double diff = 0.0;
  for (std::size_t i = 0; i < before.mean.data.size(); ++i)
    diff = std::max(diff, std::abs(before.mean.data[i] - after.mean.data[i]));
  CHECK(diff > 1e-6);
}
