#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "cldyn/model/memory.hpp"
#include "cldyn/model/ssm.hpp"

namespace cldyn {

struct CddpConfig {
  SsmConfig ssm;
  std::size_t memory_size = 20;  // R
  double alpha0 = 1.0;
  double slot_init_std = 0.1;
};

/// The full mode-mixture model: a mode-conditioned SSM, the episodic memory,
/// and the two dense heads that map (slot, descriptor) to the initial-state
/// posterior. Slots share the latent dimension K.
struct CddpModel {
  SsmModel ssm;  // mode_conditioned, no plain init heads
  EpisodicMemory memory;
  Dense v1;  // concat(slot, descriptor) -> x0 mean
  Dense v2;  // concat(slot, descriptor) -> x0 pre-variance
  bool train_slots = true;

  std::size_t n_modes() const { return memory.size(); }

  static CddpModel make(const CddpConfig& cfg, Rng& rng) {
    CddpModel m;
    m.ssm = SsmModel::make(cfg.ssm, rng, /*mode_conditioned=*/true,
                           /*with_init_heads=*/false);
    const std::size_t K = cfg.ssm.latent_dim;
    m.v1 = Dense::make(2 * K, K, rng);
    m.v2 = Dense::make(2 * K, K, rng);
    m.memory = EpisodicMemory::make(cfg.memory_size, K, cfg.alpha0, rng, cfg.slot_init_std);
    return m;
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> out = ssm.parameters();
    out.push_back(v1.W);
    out.push_back(v1.b);
    out.push_back(v2.W);
    out.push_back(v2.b);
    if (train_slots && memory.slots.requires_grad()) out.push_back(memory.slots);
    return out;
  }

  Tensor slot_t(std::size_t r) const {
    return slice(memory.slots, r * memory.dim(), {memory.dim()});
  }
};

/// q(pi | y_{1:C}): encode the context, attend against the current memory.
inline AttentionWeights mode_posterior(const CddpModel& m, const Matrix& context) {
  NoGradGuard ng;
  auto d = encode_context(m.ssm, context);
  return attention(m.memory, d);
}

/// Per-mode initial-state posterior N(v1(m_r, d), softplus(v2(m_r, d)) + 1e-6).
inline GaussPair mode_init_posterior_t(const CddpModel& m, const Tensor& slot,
                                       const Tensor& descriptor) {
  Tensor input = concat(slot, descriptor);
  Tensor mean = apply(m.v1, input);
  Tensor var = add_scalar(softplus_t(apply(m.v2, input)), 1e-6);
  return {mean, var};
}

inline GaussianDiag mode_init_posterior(const CddpModel& m, const std::vector<double>& slot,
                                        const std::vector<double>& descriptor) {
  NoGradGuard ng;
  auto g = mode_init_posterior_t(m, Tensor::vector(std::vector<double>(slot)),
                                 Tensor::vector(std::vector<double>(descriptor)));
  return GaussianDiag(g.mean.values(), g.var.values());
}

/// CDDP ELBO with exact enumeration over all R modes. The reconstruction and
/// initial-state KL are attention-weighted mode mixtures; the DP penalty
/// matches the attention weights against the expected stick-breaking prior.
inline ElboResult cddp_elbo(const CddpModel& m, const Sequence& seq, Rng& rng) {
  const auto& cfg = m.ssm.cfg;
  if (seq.length() <= cfg.context_len)
    throw std::invalid_argument("cddp_elbo: sequence not longer than context");
  const std::size_t R = m.n_modes();
  Matrix context = seq.values.rows_range(0, cfg.context_len);
  Tensor d = encode_context_t(m.ssm, context);
  Tensor w = attention_t(m.memory.slots, d);
  StickPrior pi = stick_prior(m.memory.alpha0, R);
  Tensor kl_pi = dp_kl_t(w, pi);
  Tensor kl_theta = kl_theta_t(m.ssm);

  std::vector<Tensor> slots(R), q0_mean(R), q0_var(R);
  std::vector<Tensor> kl_terms;
  kl_terms.reserve(R);
  for (std::size_t r = 0; r < R; ++r) {
    slots[r] = m.slot_t(r);
    GaussPair q0 = mode_init_posterior_t(m, slots[r], d);
    q0_mean[r] = q0.mean;
    q0_var[r] = q0.var;
    kl_terms.push_back(mul(at(w, r), kl_std_normal_t(q0.mean, q0.var)));
  }
  Tensor kl_x0 = add_many(kl_terms);

  std::vector<Tensor> recons;
  recons.reserve(cfg.mc_samples);
  for (int s = 0; s < cfg.mc_samples; ++s) {
    Tensor theta = sample_theta_t(m.ssm, rng);
    auto tw = slice_theta(m.ssm, theta);
    std::vector<Tensor> mode_terms;
    mode_terms.reserve(R);
    for (std::size_t r = 0; r < R; ++r) {
      Tensor x0 = sample_gaussian_t(q0_mean[r], q0_var[r], rng);
      Tensor ll = rollout_loglik_t(m.ssm, seq.values, tw, x0, slots[r], rng);
      mode_terms.push_back(mul(at(w, r), ll));
    }
    recons.push_back(add_many(mode_terms));
  }
  Tensor recon = mul_scalar(add_many(recons), 1.0 / cfg.mc_samples);
  return finish_elbo(recon, kl_x0, kl_theta, kl_pi);
}

/// ELBO of the control-augmented SSM that fixes one memory slot as control
/// input and initial-state condition. With R = 1, cddp_elbo reduces to this
/// bit for bit under a shared RNG stream.
inline ElboResult bssm_elbo_fixed_mode(const CddpModel& m, std::size_t r,
                                       const Sequence& seq, Rng& rng) {
  const auto& cfg = m.ssm.cfg;
  if (seq.length() <= cfg.context_len)
    throw std::invalid_argument("bssm_elbo_fixed_mode: sequence not longer than context");
  Matrix context = seq.values.rows_range(0, cfg.context_len);
  Tensor d = encode_context_t(m.ssm, context);
  Tensor slot = m.slot_t(r);
  GaussPair q0 = mode_init_posterior_t(m, slot, d);
  Tensor kl_x0 = kl_std_normal_t(q0.mean, q0.var);
  Tensor kl_theta = kl_theta_t(m.ssm);
  std::vector<Tensor> recons;
  recons.reserve(cfg.mc_samples);
  for (int s = 0; s < cfg.mc_samples; ++s) {
    Tensor theta = sample_theta_t(m.ssm, rng);
    auto tw = slice_theta(m.ssm, theta);
    Tensor x0 = sample_gaussian_t(q0.mean, q0.var, rng);
    recons.push_back(rollout_loglik_t(m.ssm, seq.values, tw, x0, slot, rng));
  }
  Tensor recon = mul_scalar(add_many(recons), 1.0 / cfg.mc_samples);
  return finish_elbo(recon, kl_x0, kl_theta, Tensor::scalar(0.0));
}

/// Prediction conditioned on one fixed mode slot.
inline Predictive predict_fixed_mode(const CddpModel& m, std::size_t r,
                                     const Matrix& context, std::size_t horizon,
                                     std::size_t n_samples, Rng& rng) {
  NoGradGuard ng;
  auto d = encode_context(m.ssm, context);
  GaussianDiag q0 = mode_init_posterior(m, m.slot_t(r).values(), d);
  std::optional<Tensor> control = m.slot_t(r);
  Predictive out;
  out.paths.reserve(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) {
    Tensor theta = sample_theta_t(m.ssm, rng);
    auto tw = slice_theta(m.ssm, theta);
    std::vector<double> x0 = sample_gaussian(q0, rng);
    out.paths.push_back(sample_predicted_path(m.ssm, tw, std::move(x0), control,
                                              context.rows, horizon, rng));
  }
  detail::summarize_paths(out.paths, obs_var_t(m.ssm).values(), out.mean, out.var);
  return out;
}

/// Posterior predictive mixture over modes: attention-weighted combination of
/// per-mode predictive means with total-variance mixing. The memory must be
/// frozen; prediction never writes.
inline Predictive posterior_predictive(const CddpModel& m, const Matrix& context,
                                       std::size_t horizon, std::size_t n_samples,
                                       Rng& rng) {
  if (horizon < 1) throw std::invalid_argument("posterior_predictive: horizon must be >= 1");
  if (n_samples < 1)
    throw std::invalid_argument("posterior_predictive: n_samples must be >= 1");
  NoGradGuard ng;
  const std::size_t R = m.n_modes();
  AttentionWeights w = mode_posterior(m, context);
  Predictive out;
  out.mode_weights = w.w;
  out.mean = Matrix(horizon, m.ssm.cfg.obs_dim);
  out.var = Matrix(horizon, m.ssm.cfg.obs_dim);
  Matrix second(horizon, m.ssm.cfg.obs_dim);  // weighted E[var_r + mean_r^2]
  for (std::size_t r = 0; r < R; ++r) {
    Predictive pr = predict_fixed_mode(m, r, context, horizon, n_samples, rng);
    for (std::size_t i = 0; i < out.mean.data.size(); ++i) {
      out.mean.data[i] += w.w[r] * pr.mean.data[i];
      second.data[i] += w.w[r] * (pr.var.data[i] + pr.mean.data[i] * pr.mean.data[i]);
    }
    for (auto& p : pr.paths) out.paths.push_back(std::move(p));
  }
  for (std::size_t i = 0; i < out.var.data.size(); ++i)
    out.var.data[i] = second.data[i] - out.mean.data[i] * out.mean.data[i];
  return out;
}

/// Per-sequence memory update: encode the context, attend, write. Gradients
/// never flow through the write; slots learn only via the ELBO terms.
inline void observe_and_write(CddpModel& m, const Sequence& seq) {
  Matrix context = seq.values.rows_range(0, m.ssm.cfg.context_len);
  auto d = encode_context(m.ssm, context);
  AttentionWeights w = attention(m.memory, d);
  write(m.memory, d, w);
}

}  // namespace cldyn
