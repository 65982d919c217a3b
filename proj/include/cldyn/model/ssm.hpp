#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cldyn/core/gaussian.hpp"
#include "cldyn/core/nn.hpp"
#include "cldyn/core/rng.hpp"
#include "cldyn/core/tensor.hpp"
#include "cldyn/data/types.hpp"

namespace cldyn {

struct SsmConfig {
  std::size_t latent_dim = 4;   // K
  std::size_t obs_dim = 1;      // D
  std::size_t context_len = 5;  // C
  std::vector<std::size_t> encoder_hidden;  // empty = single dense layer
  std::vector<std::size_t> decoder_hidden;
  std::size_t transition_hidden = 40;  // 0 = linear transition
  double transition_var = 0.1;
  double obs_var = 0.1;
  bool learn_obs_var = false;
  int mc_samples = 1;

  void validate() const {
    if (context_len < 1) throw std::invalid_argument("SsmConfig: context_len must be >= 1");
    if (!(transition_var > 0.0))
      throw std::invalid_argument("SsmConfig: transition_var must be positive");
    if (!(obs_var > 0.0)) throw std::invalid_argument("SsmConfig: obs_var must be positive");
    if (mc_samples < 1) throw std::invalid_argument("SsmConfig: mc_samples must be >= 1");
  }
};

/// Mean-field Gaussian over the flattened transition weights, together with
/// its prior (kept in log-variance form so a transferred prior cancels the KL
/// exactly). The deterministic flag collapses the posterior to its mean.
struct TransitionPosterior {
  Tensor mu;      // [P]
  Tensor logvar;  // [P]
  std::vector<double> prior_mu;
  std::vector<double> prior_logvar;
  bool deterministic = false;

  std::size_t dim() const { return mu.size(); }
};

struct ElboBreakdown {
  double recon = 0.0;
  double kl_x0 = 0.0;
  double kl_theta = 0.0;
  double kl_pi = 0.0;
  double total = 0.0;
};

/// ELBO terms as live graph nodes; total = recon - kl_x0 - kl_theta - kl_pi.
struct ElboResult {
  Tensor recon, kl_x0, kl_theta, kl_pi, total;

  ElboBreakdown values() const {
    return {recon.item(), kl_x0.item(), kl_theta.item(), kl_pi.item(), total.item()};
  }
};

struct ElboError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SsmModel {
  SsmConfig cfg;
  Mlp encoder;        // flattened context -> descriptor (K)
  Dense init_mu;      // descriptor -> x0 mean (unused when CDDP heads take over)
  Dense init_var;     // descriptor -> x0 pre-variance
  bool has_init_heads = true;
  TransitionPosterior qtheta;
  Mlp decoder;        // latent -> observation mean
  Tensor log_obs_var; // [D], only a parameter when cfg.learn_obs_var
  bool mode_conditioned = false;  // transition input includes a control vector

  std::size_t transition_in_dim() const {
    return cfg.latent_dim * (mode_conditioned ? 2 : 1);
  }

  std::size_t theta_dim() const {
    const std::size_t in = transition_in_dim();
    const std::size_t K = cfg.latent_dim;
    const std::size_t H = cfg.transition_hidden;
    return H > 0 ? H * in + H + K * H + K : K * in + K;
  }

  static SsmModel make(const SsmConfig& cfg, Rng& rng, bool mode_conditioned = false,
                       bool with_init_heads = true, bool deterministic = false) {
    cfg.validate();
    SsmModel m;
    m.cfg = cfg;
    m.mode_conditioned = mode_conditioned;
    m.has_init_heads = with_init_heads;
    const std::size_t K = cfg.latent_dim;
    m.encoder = Mlp::make(cfg.context_len * cfg.obs_dim, cfg.encoder_hidden, K, rng);
    if (with_init_heads) {
      m.init_mu = Dense::make(K, K, rng);
      m.init_var = Dense::make(K, K, rng);
    }
    const std::size_t P = m.theta_dim();
    std::vector<double> mu(P);
    {
      // Per-block N(0, 1/fan_in) means, zero bias means.
      const std::size_t in = m.transition_in_dim();
      const std::size_t H = cfg.transition_hidden;
      std::size_t off = 0;
      auto fill = [&](std::size_t count, double std) {
        for (std::size_t i = 0; i < count; ++i) mu[off++] = std * rng.normal();
      };
      if (H > 0) {
        fill(H * in, 1.0 / std::sqrt(static_cast<double>(in)));
        off += H;  // hidden bias stays zero
        fill(K * H, 1.0 / std::sqrt(static_cast<double>(H)));
        off += K;
      } else {
        fill(K * in, 1.0 / std::sqrt(static_cast<double>(in)));
        off += K;
      }
    }
    m.qtheta.mu = Tensor::leaf({P}, std::move(mu), true);
    m.qtheta.logvar = Tensor::full({P}, -6.0, true);
    m.qtheta.prior_mu.assign(P, 0.0);
    m.qtheta.prior_logvar.assign(P, 0.0);  // standard normal prior
    m.qtheta.deterministic = deterministic;
    m.decoder = Mlp::make(K, cfg.decoder_hidden, cfg.obs_dim, rng);
    m.log_obs_var = Tensor::full({cfg.obs_dim}, std::log(cfg.obs_var), cfg.learn_obs_var);
    return m;
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> out;
    encoder.collect_parameters(out);
    if (has_init_heads) {
      out.push_back(init_mu.W);
      out.push_back(init_mu.b);
      out.push_back(init_var.W);
      out.push_back(init_var.b);
    }
    out.push_back(qtheta.mu);
    if (!qtheta.deterministic) out.push_back(qtheta.logvar);
    decoder.collect_parameters(out);
    if (cfg.learn_obs_var) out.push_back(log_obs_var);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Component operations
// ---------------------------------------------------------------------------

inline Tensor flatten_context(const Matrix& context) {
  return Tensor::vector(std::vector<double>(context.data));
}

inline Tensor encode_context_t(const SsmModel& m, const Matrix& context) {
  if (context.rows != m.cfg.context_len)
    throw std::invalid_argument("encode_context: expected " +
                                std::to_string(m.cfg.context_len) + " rows, got " +
                                std::to_string(context.rows));
  return apply(m.encoder, flatten_context(context));
}

inline std::vector<double> encode_context(const SsmModel& m, const Matrix& context) {
  NoGradGuard ng;
  return encode_context_t(m, context).values();
}

struct GaussPair {
  Tensor mean;
  Tensor var;
};

inline GaussPair init_state_posterior_t(const SsmModel& m, const Tensor& descriptor) {
  if (!m.has_init_heads)
    throw std::logic_error("init_state_posterior: model has no init heads");
  Tensor mu = apply(m.init_mu, descriptor);
  Tensor var = add_scalar(softplus_t(apply(m.init_var, descriptor)), 1e-6);
  return {mu, var};
}

inline GaussianDiag init_state_posterior(const SsmModel& m, const Matrix& context) {
  NoGradGuard ng;
  auto g = init_state_posterior_t(m, encode_context_t(m, context));
  return GaussianDiag(g.mean.values(), g.var.values());
}

/// Transition weights viewed as slices of the flat theta vector.
struct TransitionWeights {
  Tensor W1, b1, W2, b2;  // hidden layer form
  Tensor W, b;            // linear form
  bool linear = false;
};

inline TransitionWeights slice_theta(const SsmModel& m, const Tensor& theta) {
  if (theta.size() != m.theta_dim())
    throw std::invalid_argument("slice_theta: theta dimension mismatch");
  const std::size_t in = m.transition_in_dim();
  const std::size_t K = m.cfg.latent_dim;
  const std::size_t H = m.cfg.transition_hidden;
  TransitionWeights w;
  if (H > 0) {
    std::size_t off = 0;
    w.W1 = slice(theta, off, {H, in});
    off += H * in;
    w.b1 = slice(theta, off, {H});
    off += H;
    w.W2 = slice(theta, off, {K, H});
    off += K * H;
    w.b2 = slice(theta, off, {K});
  } else {
    w.linear = true;
    w.W = slice(theta, 0, {K, in});
    w.b = slice(theta, K * in, {K});
  }
  return w;
}

/// Mean of p(x_t | x_{t-1}[, control], theta): a one-hidden-layer recurrent
/// cell with tanh + layer norm, or a plain dense map when hidden size is 0.
inline Tensor transition_mean_t(const SsmModel& m, const TransitionWeights& w,
                                const Tensor& x_prev,
                                const std::optional<Tensor>& control) {
  if (m.mode_conditioned != control.has_value())
    throw std::invalid_argument("transition: control must be present iff mode-conditioned");
  Tensor input = control ? concat(x_prev, *control) : x_prev;
  if (w.linear) return dense(input, w.W, w.b);
  Tensor h = layer_norm(tanh_t(dense(input, w.W1, w.b1)));
  return dense(h, w.W2, w.b2);
}

inline GaussianDiag transition_step(const SsmModel& m, const std::vector<double>& theta,
                                    const std::vector<double>& x_prev,
                                    const std::optional<std::vector<double>>& control) {
  NoGradGuard ng;
  auto w = slice_theta(m, Tensor::vector(std::vector<double>(theta)));
  std::optional<Tensor> c;
  if (control) c = Tensor::vector(std::vector<double>(*control));
  Tensor mean = transition_mean_t(m, w, Tensor::vector(std::vector<double>(x_prev)), c);
  return GaussianDiag(mean.values(),
                      std::vector<double>(m.cfg.latent_dim, m.cfg.transition_var));
}

inline Tensor obs_var_t(const SsmModel& m) {
  if (m.cfg.learn_obs_var) return exp_t(m.log_obs_var);
  return Tensor::full({m.cfg.obs_dim}, m.cfg.obs_var);
}

inline Tensor decode_mean_t(const SsmModel& m, const Tensor& x) { return apply(m.decoder, x); }

inline GaussianDiag decode(const SsmModel& m, const std::vector<double>& x) {
  NoGradGuard ng;
  Tensor mean = decode_mean_t(m, Tensor::vector(std::vector<double>(x)));
  return GaussianDiag(mean.values(), obs_var_t(m).values());
}

/// Reparameterized draw from q_psi (or its mean when deterministic).
inline Tensor sample_theta_t(const SsmModel& m, Rng& rng) {
  if (m.qtheta.deterministic) return m.qtheta.mu;
  Tensor eps = Tensor::vector(rng.normal_vec(m.qtheta.dim()));
  Tensor std = exp_t(mul_scalar(m.qtheta.logvar, 0.5));
  return add(m.qtheta.mu, mul(std, eps));
}

inline Tensor kl_theta_t(const SsmModel& m) {
  if (m.qtheta.deterministic) return Tensor::scalar(0.0);
  return kl_gauss_logvar_t(m.qtheta.mu, m.qtheta.logvar, m.qtheta.prior_mu,
                           m.qtheta.prior_logvar);
}

// ---------------------------------------------------------------------------
// ELBO and prediction
// ---------------------------------------------------------------------------

/// Sum over t of log p(y_t | x_t) along a sampled latent rollout. States are
/// sampled through the transition kernel for all T steps (context included).
inline Tensor rollout_loglik_t(const SsmModel& m, const Matrix& y,
                               const TransitionWeights& w, const Tensor& x0,
                               const std::optional<Tensor>& control, Rng& rng) {
  const double trans_std = std::sqrt(m.cfg.transition_var);
  Tensor ovar = obs_var_t(m);
  Tensor x = x0;
  std::vector<Tensor> lls;
  lls.reserve(y.rows);
  for (std::size_t t = 0; t < y.rows; ++t) {
    Tensor mean = transition_mean_t(m, w, x, control);
    std::vector<double> noise = rng.normal_vec(m.cfg.latent_dim);
    for (auto& n : noise) n *= trans_std;
    x = add(mean, Tensor::vector(std::move(noise)));
    Tensor ymean = decode_mean_t(m, x);
    lls.push_back(gaussian_logpdf(y.row(t), ymean, ovar));
  }
  return add_many(lls);
}

inline ElboResult finish_elbo(Tensor recon, Tensor kl_x0, Tensor kl_theta, Tensor kl_pi) {
  Tensor total = sub(sub(sub(recon, kl_x0), kl_theta), kl_pi);
  ElboResult r{recon, kl_x0, kl_theta, kl_pi, total};
  if (!std::isfinite(total.item())) {
    const auto v = r.values();
    throw ElboError("non-finite ELBO: recon=" + std::to_string(v.recon) +
                    " kl_x0=" + std::to_string(v.kl_x0) +
                    " kl_theta=" + std::to_string(v.kl_theta) +
                    " kl_pi=" + std::to_string(v.kl_pi));
  }
  return r;
}

/// Monte-Carlo ELBO of the plain Bayesian state-space model.
inline ElboResult bssm_elbo(const SsmModel& m, const Sequence& seq, Rng& rng) {
  if (seq.length() <= m.cfg.context_len)
    throw std::invalid_argument("bssm_elbo: sequence not longer than context");
  if (m.mode_conditioned)
    throw std::logic_error("bssm_elbo: model expects a control input");
  Matrix context = seq.values.rows_range(0, m.cfg.context_len);
  Tensor d = encode_context_t(m, context);
  GaussPair q0 = init_state_posterior_t(m, d);
  Tensor kl_x0 = kl_std_normal_t(q0.mean, q0.var);
  Tensor kl_theta = kl_theta_t(m);
  std::vector<Tensor> recons;
  recons.reserve(m.cfg.mc_samples);
  for (int s = 0; s < m.cfg.mc_samples; ++s) {
    Tensor theta = sample_theta_t(m, rng);
    auto w = slice_theta(m, theta);
    Tensor x0 = sample_gaussian_t(q0.mean, q0.var, rng);
    recons.push_back(rollout_loglik_t(m, seq.values, w, x0, std::nullopt, rng));
  }
  Tensor recon = mul_scalar(add_many(recons), 1.0 / m.cfg.mc_samples);
  return finish_elbo(recon, kl_x0, kl_theta, Tensor::scalar(0.0));
}

/// Per-step predictive summary plus the raw decoded sample paths.
struct Predictive {
  Matrix mean;               // horizon x D
  Matrix var;                // horizon x D (observation noise included)
  std::vector<Matrix> paths; // per sample, horizon x D decoded means
  std::vector<double> mode_weights;  // CDDP only
};

namespace detail {

/// Mixture summary of equally weighted decoded paths: mean of means plus
/// observation variance and the population spread of the means.
inline void summarize_paths(const std::vector<Matrix>& paths,
                            const std::vector<double>& obs_var, Matrix& mean, Matrix& var) {
  const std::size_t H = paths[0].rows, D = paths[0].cols;
  mean = Matrix(H, D);
  var = Matrix(H, D);
  const double n = static_cast<double>(paths.size());
  for (const auto& p : paths)
    for (std::size_t i = 0; i < p.data.size(); ++i) mean.data[i] += p.data[i] / n;
  for (const auto& p : paths)
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      const double d = p.data[i] - mean.data[i];
      var.data[i] += d * d / n;
    }
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t d = 0; d < D; ++d) var.at(h, d) += obs_var[d];
}

}  // namespace detail

/// Rolls one decoded path: C context steps plus `horizon` prediction steps,
/// returning the decoded means of steps C+1..C+horizon.
inline Matrix sample_predicted_path(const SsmModel& m, const TransitionWeights& w,
                                    std::vector<double> x0,
                                    const std::optional<Tensor>& control,
                                    std::size_t context_len, std::size_t horizon, Rng& rng) {
  NoGradGuard ng;
  const double trans_std = std::sqrt(m.cfg.transition_var);
  Matrix path(horizon, m.cfg.obs_dim);
  Tensor x = Tensor::vector(std::move(x0));
  for (std::size_t t = 0; t < context_len + horizon; ++t) {
    Tensor mean = transition_mean_t(m, w, x, control);
    std::vector<double> xs = mean.values();
    for (auto& v : xs) v += trans_std * rng.normal();
    x = Tensor::vector(std::move(xs));
    if (t >= context_len) {
      Tensor ymean = decode_mean_t(m, x);
      path.set_row(t - context_len, ymean.values());
    }
  }
  return path;
}

/// Sample-based posterior predictive of the plain model over the horizon
/// following the context window.
inline Predictive predict(const SsmModel& m, const Matrix& context, std::size_t horizon,
                          std::size_t n_samples, Rng& rng) {
  if (horizon < 1) throw std::invalid_argument("predict: horizon must be >= 1");
  if (n_samples < 1) throw std::invalid_argument("predict: n_samples must be >= 1");
  NoGradGuard ng;
  GaussianDiag q0 = init_state_posterior(m, context);
  Predictive out;
  out.paths.reserve(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) {
    Tensor theta = sample_theta_t(m, rng);
    auto w = slice_theta(m, theta);
    std::vector<double> x0 = sample_gaussian(q0, rng);
    out.paths.push_back(
        sample_predicted_path(m, w, std::move(x0), std::nullopt, context.rows, horizon, rng));
  }
  detail::summarize_paths(out.paths, obs_var_t(m).values(), out.mean, out.var);
  return out;
}

}  // namespace cldyn
