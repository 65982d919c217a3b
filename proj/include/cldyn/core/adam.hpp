#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "cldyn/core/tensor.hpp"

namespace cldyn {

struct AdamState {
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<std::vector<double>> m;  // first moments, one block per parameter
  std::vector<std::vector<double>> v;  // second moments
};

struct AdamError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One Adam update with bias correction. Parameters are mutated in place;
/// moment blocks are allocated on first use. A non-finite gradient aborts the
/// whole step before any parameter is touched.
inline void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
                      AdamState& state) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_step: params/grads count mismatch");
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].size(), 0.0);
      state.v[i].assign(params[i].size(), 0.0);
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size())
      throw std::invalid_argument("adam_step: gradient shape mismatch");
    for (double g : grads[i].values())
      if (!std::isfinite(g)) throw AdamError("adam_step: non-finite gradient, step aborted");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].values_mut();
    const auto& g = grads[i].values();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace cldyn
