#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cldyn/core/adam.hpp"
#include "cldyn/core/gaussian.hpp"
#include "cldyn/core/nn.hpp"
#include "cldyn/core/rng.hpp"
#include "cldyn/core/tensor.hpp"
#include "test_util.hpp"

using namespace cldyn;

TEST_CASE("grad of x^2 at x=3 is 6") {
  Tensor x = Tensor::scalar(3.0, true);
  Tensor loss = mul(x, x);
  auto g = grad(loss, {x});
  CHECK(g[0].item() == Catch::Approx(6.0));
}

TEST_CASE("grad of tanh at 0 is 1") {
  Tensor x = Tensor::scalar(0.0, true);
  auto g = grad(tanh_t(x), {x});
  CHECK(g[0].item() == Catch::Approx(1.0));
}

TEST_CASE("loss must be scalar") {
  Tensor x = Tensor::vector({1.0, 2.0}, true);
  CHECK_THROWS_AS(grad(add(x, x), {x}), std::invalid_argument);
}

TEST_CASE("parameter off the graph gets zero gradient") {
  Tensor x = Tensor::scalar(2.0, true);
  Tensor unused = Tensor::vector({1.0, 2.0, 3.0}, true);
  auto g = grad(mul(x, x), {x, unused});
  CHECK(g[0].item() == Catch::Approx(4.0));
  for (double v : g[1].values()) CHECK(v == 0.0);
}

TEST_CASE("layer_norm -> dense -> sum matches finite differences") {
  Rng rng(7);
  Tensor x = Tensor::leaf({16}, rng.normal_vec(16), true);
  Dense d = Dense::make(16, 4, rng);
  std::vector<Tensor> params{x, d.W, d.b};
  auto f = [&]() {
    NoGradGuard ng;
    return sum(apply(d, layer_norm(x))).item();
  };
  Tensor loss = sum(apply(d, layer_norm(x)));
  auto analytic = grad(loss, params);
  auto fd = test::finite_diff(f, params);
  CHECK(test::max_rel_error(analytic, fd) < 1e-6);
}

TEST_CASE("every primitive op passes a randomized FD check") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    Tensor a = Tensor::leaf({6}, rng.normal_vec(6), true);
    std::vector<double> bv = rng.normal_vec(6);
    for (auto& v : bv) v = std::abs(v) + 0.5;  // positive for log/sqrt
    Tensor b = Tensor::leaf({6}, std::move(bv), true);
    Tensor W = Tensor::leaf({3, 6}, rng.normal_vec(18), true);
    std::vector<Tensor> params{a, b, W};
    auto make_loss = [&]() {
      Tensor t1 = mul(add(a, b), sub(a, b));
      Tensor t2 = tanh_t(a);
      Tensor t3 = exp_t(mul_scalar(a, 0.3));
      Tensor t4 = log_t(b);
      Tensor t5 = sqrt_t(b);
      Tensor t6 = softplus_t(a);
      Tensor t7 = layer_norm(a);
      Tensor t8 = softmax_t(a);
      Tensor t9 = matvec(W, add(t7, t8));
      Tensor t10 = concat(slice(t9, 0, {2}), at(t9, 2));
      Tensor parts = add_many({t1, t2, t3, t4, t5, t6});
      return add(add(sum(parts), dot(t9, t9)), add(mean(t10), sum(t10)));
    };
    auto f = [&]() {
      NoGradGuard ng;
      return make_loss().item();
    };
    Tensor loss = make_loss();
    auto analytic = grad(loss, params);
    auto fd = test::finite_diff(f, params);
    CHECK(test::max_rel_error(analytic, fd) < 1e-5);
  }
}

TEST_CASE("gaussian_logpdf matches value oracle and FD") {
  Rng rng(3);
  std::vector<double> y = rng.normal_vec(5);
  Tensor mean = Tensor::leaf({5}, rng.normal_vec(5), true);
  std::vector<double> vv = rng.normal_vec(5);
  for (auto& v : vv) v = std::abs(v) + 0.2;
  Tensor var = Tensor::leaf({5}, std::move(vv), true);
  Tensor lp = gaussian_logpdf(y, mean, var);
  CHECK(lp.item() ==
        Catch::Approx(gaussian_logpdf_value(y, GaussianDiag(mean.values(), var.values())))
            .epsilon(1e-12));
  std::vector<Tensor> params{mean, var};
  auto f = [&]() {
    NoGradGuard ng;
    return gaussian_logpdf(y, mean, var).item();
  };
  auto analytic = grad(gaussian_logpdf(y, mean, var), params);
  auto fd = test::finite_diff(f, params);
  CHECK(test::max_rel_error(analytic, fd) < 1e-6);
}

TEST_CASE("softmax output lies on the simplex") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v = rng.normal_vec(8);
    for (auto& x : v) x *= 10.0;
    Tensor s = softmax_t(Tensor::vector(std::move(v)));
    double total = 0.0;
    for (double x : s.values()) {
      CHECK(x >= 0.0);
      total += x;
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("softmax is shift invariant and uniform on constants") {
  Tensor c = softmax_t(Tensor::vector({4.2, 4.2, 4.2}));
  for (double x : c.values()) CHECK(x == Catch::Approx(1.0 / 3.0));
}

TEST_CASE("layer_norm of a constant vector is zero") {
  Tensor out = layer_norm(Tensor::vector({5.0, 5.0, 5.0, 5.0}));
  for (double v : out.values()) CHECK(v == 0.0);
}

TEST_CASE("dense identity map") {
  Tensor x = Tensor::vector({1.0, 2.0});
  Tensor W = Tensor::leaf({2, 2}, {1.0, 0.0, 0.0, 1.0});
  Tensor b = Tensor::zeros({2});
  Tensor y = dense(x, W, b);
  CHECK(y.values() == std::vector<double>{1.0, 2.0});
}

TEST_CASE("kl_gaussian_diag closed forms") {
  GaussianDiag std1({0.0}, {1.0});
  CHECK(kl_gaussian_diag(std1, std1) == 0.0);
  GaussianDiag q({1.0}, {1.0});
  CHECK(kl_gaussian_diag(q, std1) == Catch::Approx(0.5));
  CHECK_THROWS_AS(GaussianDiag({0.0}, {0.0}), std::invalid_argument);
}

TEST_CASE("kl_gaussian_diag is nonnegative, zero iff equal") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> qm = rng.normal_vec(4), pm = rng.normal_vec(4);
    std::vector<double> qv(4), pv(4);
    for (int i = 0; i < 4; ++i) {
      qv[i] = std::exp(rng.normal());
      pv[i] = std::exp(rng.normal());
    }
    GaussianDiag q(qm, qv), p(pm, pv);
    CHECK(kl_gaussian_diag(q, p) >= 0.0);
    CHECK(kl_gaussian_diag(q, q) == 0.0);
  }
}

TEST_CASE("kl_gaussian_diag matches a Monte-Carlo estimate") {
  Rng rng(17);
  std::vector<double> qm = rng.normal_vec(8), pm = rng.normal_vec(8);
  std::vector<double> qv(8), pv(8);
  for (int i = 0; i < 8; ++i) {
    qv[i] = std::exp(0.5 * rng.normal());
    pv[i] = std::exp(0.5 * rng.normal());
  }
  GaussianDiag q(qm, qv), p(pm, pv);
  const double closed = kl_gaussian_diag(q, p);
  const int n = 200000;
  double acc = 0.0;
  for (int s = 0; s < n; ++s) {
    auto x = sample_gaussian(q, rng);
    acc += gaussian_logpdf_value(x, q) - gaussian_logpdf_value(x, p);
  }
  acc /= n;
  CHECK(std::abs(acc - closed) / closed < 0.02);
}

TEST_CASE("sample_gaussian degenerate variance returns the mean") {
  Rng rng(1);
  GaussianDiag d({2.0, -3.0}, {1e-30, 1e-30});
  auto x = sample_gaussian(d, rng);
  CHECK(x[0] == Catch::Approx(2.0).margin(1e-12));
  CHECK(x[1] == Catch::Approx(-3.0).margin(1e-12));
}

TEST_CASE("sample_gaussian law of large numbers") {
  Rng rng(23);
  GaussianDiag d({2.0}, {9.0});
  const int n = 100000;
  double s = 0.0, ss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = sample_gaussian(d, rng)[0];
    s += x;
    ss += x * x;
  }
  const double mean = s / n;
  const double var = ss / n - mean * mean;
  CHECK(std::abs(mean - 2.0) < 0.05);
  CHECK(std::abs(var - 9.0) < 0.3);
}

TEST_CASE("reparameterized sample: d E[sample]/d mean = 1") {
  Rng rng(9);
  Tensor mean = Tensor::vector({0.5, -1.0, 2.0}, true);
  Tensor var = Tensor::vector({0.3, 0.7, 1.5}, true);
  Tensor s = sample_gaussian_t(mean, var, rng);
  auto g = grad(sum(s), {mean});
  for (double v : g[0].values()) CHECK(v == Catch::Approx(1.0));
}

TEST_CASE("kl tensor helpers match the value-level formulas") {
  Rng rng(31);
  Tensor mu = Tensor::leaf({6}, rng.normal_vec(6), true);
  std::vector<double> vv = rng.normal_vec(6);
  for (auto& v : vv) v = std::exp(v);
  Tensor var = Tensor::leaf({6}, std::move(vv), true);
  const double expected =
      kl_gaussian_diag(GaussianDiag(mu.values(), var.values()), GaussianDiag::standard(6));
  CHECK(kl_std_normal_t(mu, var).item() == Catch::Approx(expected).epsilon(1e-12));

  std::vector<double> lv = rng.normal_vec(6), pmu = rng.normal_vec(6), plv = rng.normal_vec(6);
  Tensor lv_t = Tensor::leaf({6}, std::vector<double>(lv), true);
  std::vector<double> qvar(6), pvar(6);
  for (int i = 0; i < 6; ++i) {
    qvar[i] = std::exp(lv[i]);
    pvar[i] = std::exp(plv[i]);
  }
  const double expected2 =
      kl_gaussian_diag(GaussianDiag(mu.values(), qvar), GaussianDiag(pmu, pvar));
  CHECK(kl_gauss_logvar_t(mu, lv_t, pmu, plv).item() ==
        Catch::Approx(expected2).epsilon(1e-10));
}

TEST_CASE("kl_gauss_logvar_t is exactly zero when posterior equals prior") {
  Rng rng(41);
  std::vector<double> mu = rng.normal_vec(5), lv = rng.normal_vec(5);
  Tensor mu_t = Tensor::leaf({5}, std::vector<double>(mu), true);
  Tensor lv_t = Tensor::leaf({5}, std::vector<double>(lv), true);
  CHECK(kl_gauss_logvar_t(mu_t, lv_t, mu, lv).item() == 0.0);
}

TEST_CASE("adam first step and zero-gradient fixed point") {
  std::vector<Tensor> params{Tensor::scalar(0.0, true)};
  AdamState st;
  st.lr = 0.1;
  adam_step(params, {Tensor::scalar(1.0)}, st);
  CHECK(params[0].item() == Catch::Approx(-0.1).epsilon(1e-6));

  std::vector<Tensor> p2{Tensor::vector({1.0, -2.0, 3.0}, true)};
  AdamState st2;
  adam_step(p2, {Tensor::zeros({3})}, st2);
  CHECK(p2[0].values() == std::vector<double>{1.0, -2.0, 3.0});
  adam_step(p2, {Tensor::zeros({3})}, st2);
  CHECK(p2[0].values() == std::vector<double>{1.0, -2.0, 3.0});
}

TEST_CASE("adam rejects non-finite gradients") {
  std::vector<Tensor> params{Tensor::scalar(0.0, true)};
  AdamState st;
  CHECK_THROWS_AS(adam_step(params, {Tensor::scalar(std::nan(""))}, st), AdamError);
  CHECK(params[0].item() == 0.0);
}

TEST_CASE("adam minimizes (x-5)^2 in 200 steps") {
  std::vector<Tensor> params{Tensor::scalar(0.0, true)};
  AdamState st;
  st.lr = 0.1;
  for (int i = 0; i < 200; ++i) {
    Tensor diff = add_scalar(params[0], -5.0);
    Tensor loss = mul(diff, diff);
    auto g = grad(loss, params);
    adam_step(params, g, st);
  }
  CHECK(std::abs(params[0].item() - 5.0) < 0.05);
}

TEST_CASE("seeded rng reproduces bit-identical traces") {
  Rng a(123), b(123);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.normal() == b.normal());
    CHECK(a.uniform() == b.uniform());
  }
  Rng c(123, 1), d(123, 2);
  CHECK(c.normal() != d.normal());
}

TEST_CASE("rng state serialization round-trips") {
  Rng a(77);
  for (int i = 0; i < 10; ++i) a.normal();
  const std::string state = a.serialize();
  Rng b(0);
  b.deserialize(state);
  for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
}

TEST_CASE("NoGradGuard suppresses recording") {
  Tensor x = Tensor::scalar(2.0, true);
  NoGradGuard ng;
  Tensor y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
}
