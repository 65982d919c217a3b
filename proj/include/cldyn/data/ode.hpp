#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cldyn/data/types.hpp"

namespace cldyn {

using VectorField = std::function<std::vector<double>(const std::vector<double>&)>;

struct IntegrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Classical fixed-step RK4. Returns a (steps+1) x dim trajectory whose first
/// row is the initial state.
inline Matrix integrate_ode(const VectorField& field, const std::vector<double>& x0,
                            double dt, std::size_t steps) {
  if (!(dt > 0.0)) throw std::invalid_argument("integrate_ode: dt must be positive");
  const std::size_t d = x0.size();
  Matrix traj(steps + 1, d);
  std::vector<double> x = x0;
  traj.set_row(0, x);
  std::vector<double> tmp(d), k1, k2, k3, k4;
  for (std::size_t s = 1; s <= steps; ++s) {
    k1 = field(x);
    for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + 0.5 * dt * k1[i];
    k2 = field(tmp);
    for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + 0.5 * dt * k2[i];
    k3 = field(tmp);
    for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + dt * k3[i];
    k4 = field(tmp);
    for (std::size_t i = 0; i < d; ++i)
      x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    for (double v : x)
      if (!std::isfinite(v))
        throw IntegrationError("integrate_ode: non-finite state at step " + std::to_string(s));
    traj.set_row(s, x);
  }
  return traj;
}

inline VectorField lotka_volterra_field(double alpha, double beta, double gamma, double delta) {
  return [=](const std::vector<double>& s) {
    return std::vector<double>{alpha * s[0] - beta * s[0] * s[1],
                               delta * s[0] * s[1] - gamma * s[1]};
  };
}

inline VectorField lorenz_field(double sigma, double rho, double beta) {
  return [=](const std::vector<double>& s) {
    return std::vector<double>{sigma * (s[1] - s[0]), s[0] * (rho - s[2]) - s[1],
                               s[0] * s[1] - beta * s[2]};
  };
}

/// RK4 with `substeps` internal steps per observation interval, sampled back
/// onto the dt grid. Keeps conserved quantities tight when dt is coarse
/// relative to the dynamics.
inline Matrix integrate_ode_sampled(const VectorField& field, const std::vector<double>& x0,
                                    double dt, std::size_t steps, std::size_t substeps) {
  if (substeps < 1) throw std::invalid_argument("integrate_ode_sampled: substeps must be >= 1");
  if (substeps == 1) return integrate_ode(field, x0, dt, steps);
  Matrix fine = integrate_ode(field, x0, dt / static_cast<double>(substeps), steps * substeps);
  Matrix out(steps + 1, fine.cols);
  for (std::size_t s = 0; s <= steps; ++s) out.set_row(s, fine.row(s * substeps));
  return out;
}

/// Predator-prey trajectory from the fixed starting point (2, 2). The coarse
/// 0.4 observation step needs internal substepping to hold the first integral
/// of the system within acceptance accuracy.
inline Matrix gen_lotka_volterra(double alpha, double beta, double gamma, double delta,
                                 std::size_t steps, double dt = 0.4,
                                 std::vector<double> x0 = {2.0, 2.0},
                                 std::size_t substeps = 8) {
  if (alpha < 0 || beta < 0 || gamma < 0 || delta < 0)
    throw std::invalid_argument("gen_lotka_volterra: negative parameter");
  Matrix traj = integrate_ode_sampled(lotka_volterra_field(alpha, beta, gamma, delta), x0,
                                      dt, steps, substeps);
  for (double v : traj.data)
    if (v < 1e-12)
      throw IntegrationError("gen_lotka_volterra: population underflow below 1e-12");
  return traj;
}

inline Matrix gen_lorenz(double sigma, double rho, double beta, std::size_t steps,
                         double dt = 0.01, std::vector<double> x0 = {1.0, 1.0, 28.0}) {
  if (sigma <= 0 || rho <= 0 || beta <= 0)
    throw std::invalid_argument("gen_lorenz: parameters must be positive");
  return integrate_ode(lorenz_field(sigma, rho, beta), x0, dt, steps);
}

/// Conserved quantity of the Lotka-Volterra system; constant along exact
/// trajectories, used as an integration-accuracy oracle.
inline double lv_first_integral(double alpha, double beta, double gamma, double delta,
                                double x, double y) {
  return delta * x - gamma * std::log(x) + beta * y - alpha * std::log(y);
}

}  // namespace cldyn
