#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cldyn/core/rng.hpp"
#include "cldyn/core/tensor.hpp"

namespace cldyn {

/// R mode-descriptor slots living in the latent space, with the concentration
/// of the stick-breaking prior on their retrieval. The memory persists across
/// tasks and is never reset at task boundaries.
struct EpisodicMemory {
  Tensor slots;  // [R, K]
  double alpha0 = 1.0;
  bool write_enabled = true;

  std::size_t size() const { return slots.shape()[0]; }
  std::size_t dim() const { return slots.shape()[1]; }

  static EpisodicMemory make(std::size_t R, std::size_t K, double alpha0, Rng& rng,
                             double init_std = 0.1, bool trainable = true) {
    if (R < 1) throw std::invalid_argument("EpisodicMemory: R must be >= 1");
    if (!(alpha0 > 0.0)) throw std::invalid_argument("EpisodicMemory: alpha0 must be > 0");
    EpisodicMemory m;
    std::vector<double> v(R * K);
    for (auto& x : v) x = init_std * rng.normal();
    m.slots = Tensor::leaf({R, K}, std::move(v), trainable);
    m.alpha0 = alpha0;
    return m;
  }

  static EpisodicMemory constant(std::size_t R, std::size_t K, double fill, double alpha0) {
    EpisodicMemory m;
    m.slots = Tensor::full({R, K}, fill, false);
    m.alpha0 = alpha0;
    m.write_enabled = false;
    return m;
  }
};

struct AttentionWeights {
  std::vector<double> w;

  void validate() const {
    double s = 0.0;
    for (double x : w) {
      if (x < 0.0) throw std::invalid_argument("AttentionWeights: negative entry");
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-10)
      throw std::invalid_argument("AttentionWeights: entries do not sum to 1");
  }
};

struct StickPrior {
  std::vector<double> pi;
};

struct MemoryFrozenError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Softmax over slot-descriptor similarities; similarity is the dot product
/// scaled by 1/sqrt(K). Differentiable in both the descriptor and the slots.
inline Tensor attention_t(const Tensor& slots, const Tensor& descriptor) {
  if (slots.shape().size() != 2 || slots.shape()[1] != descriptor.size())
    throw std::invalid_argument("attention: descriptor dimension mismatch");
  const double scale = 1.0 / std::sqrt(static_cast<double>(descriptor.size()));
  Tensor logits = mul_scalar(matvec(slots, descriptor), scale);
  return softmax_t(logits);
}

inline AttentionWeights attention(const EpisodicMemory& mem,
                                  const std::vector<double>& descriptor) {
  NoGradGuard ng;
  Tensor w = attention_t(mem.slots, Tensor::vector(std::vector<double>(descriptor)));
  return AttentionWeights{w.values()};
}

/// Convex write rule: each slot moves toward the descriptor by its own
/// attention weight. A raw value update, deliberately outside the tape.
inline void write(EpisodicMemory& mem, const std::vector<double>& descriptor,
                  const AttentionWeights& weights) {
  if (!mem.write_enabled) throw MemoryFrozenError("write: memory is frozen");
  if (weights.w.size() != mem.size())
    throw std::invalid_argument("write: weight count mismatch");
  if (descriptor.size() != mem.dim())
    throw std::invalid_argument("write: descriptor dimension mismatch");
  weights.validate();
  auto& s = mem.slots.values_mut();
  const std::size_t K = mem.dim();
  for (std::size_t r = 0; r < mem.size(); ++r) {
    const double w = weights.w[r];
    for (std::size_t k = 0; k < K; ++k)
      s[r * K + k] = (1.0 - w) * s[r * K + k] + w * descriptor[k];
  }
}

inline void freeze(EpisodicMemory& mem) { mem.write_enabled = false; }
inline void thaw(EpisodicMemory& mem) { mem.write_enabled = true; }

/// Expected truncated stick-breaking weights: each fraction takes its mean
/// 1/(1+alpha0) and the last entry absorbs the remaining mass, so the vector
/// sums to one exactly.
inline StickPrior stick_prior(double alpha0, std::size_t R) {
  if (!(alpha0 > 0.0)) throw std::invalid_argument("stick_prior: alpha0 must be > 0");
  if (R < 1) throw std::invalid_argument("stick_prior: R must be >= 1");
  StickPrior p;
  p.pi.resize(R);
  const double frac = 1.0 / (1.0 + alpha0);
  const double rest = alpha0 / (1.0 + alpha0);
  double remaining = 1.0;
  for (std::size_t r = 0; r + 1 < R; ++r) {
    p.pi[r] = frac * remaining;
    remaining *= rest;
  }
  p.pi[R - 1] = remaining;
  return p;
}

/// Categorical KL sum_r w_r log(w_r / pi_r) with 0 log 0 := 0. A positive
/// weight on a zero-probability prior entry is capped at a large finite value
/// (cannot happen with stick_prior outputs).
inline double dp_kl(const AttentionWeights& w, const StickPrior& pi) {
  if (w.w.size() != pi.pi.size()) throw std::invalid_argument("dp_kl: size mismatch");
  w.validate();
  double kl = 0.0;
  for (std::size_t r = 0; r < w.w.size(); ++r) {
    if (w.w[r] <= 0.0) continue;
    if (pi.pi[r] <= 0.0) {
      kl += 1e12;
      continue;
    }
    kl += w.w[r] * std::log(w.w[r] / pi.pi[r]);
  }
  return kl;
}

/// Tape form of the DP attention penalty, with the same 0 log 0 := 0
/// convention as dp_kl. Saturated softmax outputs can underflow to exact
/// zero; those entries contribute nothing to the value or the gradient.
inline Tensor dp_kl_t(const Tensor& w, const StickPrior& pi) {
  if (w.size() != pi.pi.size()) throw std::invalid_argument("dp_kl_t: size mismatch");
  std::vector<double> log_pi(pi.pi.size());
  for (std::size_t r = 0; r < log_pi.size(); ++r) log_pi[r] = std::log(pi.pi[r]);
  double kl = 0.0;
  for (std::size_t r = 0; r < w.size(); ++r)
    if (w.value(r) > 0.0) kl += w.value(r) * (std::log(w.value(r)) - log_pi[r]);
  Tensor out = detail::make_node({1}, {kl});
  auto* pw = w.node();
  detail::record(out, {w}, [pw, log_pi](detail::TapeNode& self) {
    pw->ensure_grad();
    const double g = self.grad[0];
    for (std::size_t r = 0; r < pw->value.size(); ++r) {
      if (pw->value[r] <= 0.0) continue;
      pw->grad[r] += g * (std::log(pw->value[r]) - log_pi[r] + 1.0);
    }
  });
  return out;
}

/// FNV-1a over the slot bytes; evaluation passes must leave it unchanged.
inline std::uint64_t memory_hash(const EpisodicMemory& mem) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const unsigned char* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  const auto& v = mem.slots.values();
  mix(reinterpret_cast<const unsigned char*>(v.data()), v.size() * sizeof(double));
  return h;
}

}  // namespace cldyn
