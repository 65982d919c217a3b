#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "cldyn/core/rng.hpp"
#include "cldyn/core/tensor.hpp"

namespace cldyn {

/// Diagonal Gaussian over a vector; all variances strictly positive.
struct GaussianDiag {
  std::vector<double> mean;
  std::vector<double> var;

  GaussianDiag() = default;
  GaussianDiag(std::vector<double> m, std::vector<double> v)
      : mean(std::move(m)), var(std::move(v)) {
    validate();
  }

  std::size_t dim() const { return mean.size(); }

  void validate() const {
    if (mean.size() != var.size())
      throw std::invalid_argument("GaussianDiag: mean/var length mismatch");
    for (double v : var)
      if (!(v > 0.0)) throw std::invalid_argument("GaussianDiag: nonpositive variance");
  }

  static GaussianDiag standard(std::size_t dim) {
    return GaussianDiag(std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0));
  }
};

/// KL(q || p) for diagonal Gaussians, elementwise closed form.
inline double kl_gaussian_diag(const GaussianDiag& q, const GaussianDiag& p) {
  if (q.dim() != p.dim()) throw std::invalid_argument("kl_gaussian_diag: dim mismatch");
  q.validate();
  p.validate();
  double kl = 0.0;
  for (std::size_t i = 0; i < q.dim(); ++i) {
    const double dm = q.mean[i] - p.mean[i];
    kl += 0.5 * (std::log(p.var[i] / q.var[i]) + (q.var[i] + dm * dm) / p.var[i] - 1.0);
  }
  return kl;
}

inline std::vector<double> sample_gaussian(const GaussianDiag& d, Rng& rng) {
  d.validate();
  std::vector<double> x(d.dim());
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = d.mean[i] + std::sqrt(d.var[i]) * rng.normal();
  return x;
}

inline double gaussian_logpdf_value(const std::vector<double>& x, const GaussianDiag& d) {
  if (x.size() != d.dim()) throw std::invalid_argument("gaussian_logpdf_value: dim mismatch");
  constexpr double log2pi = 1.8378770664093454835606594728112;
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x[i] - d.mean[i];
    s += -0.5 * (log2pi + std::log(d.var[i]) + diff * diff / d.var[i]);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Tape-level counterparts used inside ELBOs
// ---------------------------------------------------------------------------

/// Reparameterized draw: mean + sqrt(var) * eps, differentiable in mean and var.
inline Tensor sample_gaussian_t(const Tensor& mean, const Tensor& var, Rng& rng) {
  Tensor eps = Tensor::vector(rng.normal_vec(mean.size()));
  return add(mean, mul(sqrt_t(var), eps));
}

/// KL(N(mean, var) || N(0, I)) from (mean, var) tensors.
inline Tensor kl_std_normal_t(const Tensor& mean, const Tensor& var) {
  Tensor inner = add_scalar(sub(add(var, mul(mean, mean)), log_t(var)), -1.0);
  return mul_scalar(sum(inner), 0.5);
}

/// KL(N(mu, e^lv) || N(pmu, e^plv)) with the prior given as constants in
/// log-variance form. Evaluates to exactly zero when (mu, lv) carry the same
/// bits as the prior, which the VCL transfer rule relies on.
inline Tensor kl_gauss_logvar_t(const Tensor& mu, const Tensor& lv,
                                const std::vector<double>& pmu,
                                const std::vector<double>& plv) {
  if (mu.size() != pmu.size() || lv.size() != plv.size() || mu.size() != lv.size())
    throw std::invalid_argument("kl_gauss_logvar_t: dim mismatch");
  std::vector<double> inv_pvar(plv.size());
  for (std::size_t i = 0; i < plv.size(); ++i) inv_pvar[i] = std::exp(-plv[i]);
  Tensor plv_c = Tensor::vector(std::vector<double>(plv));
  Tensor pmu_c = Tensor::vector(std::vector<double>(pmu));
  Tensor term_lv = sub(plv_c, lv);
  Tensor term_ratio = exp_t(sub(lv, plv_c));
  Tensor dm = sub(mu, pmu_c);
  Tensor term_mean = mul(mul(dm, dm), Tensor::vector(std::move(inv_pvar)));
  Tensor inner = add_scalar(add(add(term_lv, term_ratio), term_mean), -1.0);
  return mul_scalar(sum(inner), 0.5);
}

}  // namespace cldyn
