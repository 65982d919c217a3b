#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "cldyn/core/rng.hpp"
#include "cldyn/data/ode.hpp"
#include "cldyn/data/types.hpp"

namespace cldyn {

inline Matrix gen_sine(double amplitude, double frequency, const std::vector<double>& t_grid) {
  for (std::size_t i = 1; i < t_grid.size(); ++i)
    if (!(t_grid[i] > t_grid[i - 1]))
      throw std::invalid_argument("gen_sine: t_grid must be ascending");
  Matrix traj(t_grid.size(), 1);
  for (std::size_t i = 0; i < t_grid.size(); ++i)
    traj.at(i, 0) = amplitude * std::sin(2.0 * std::numbers::pi * frequency * t_grid[i]);
  return traj;
}

/// Non-overlapping length-T windows separated by `jump` skipped points.
/// Window k starts at k * (T + jump); count = floor((L - T) / (T + jump)) + 1.
inline std::vector<Matrix> windowize(const Matrix& long_traj, std::size_t T,
                                     std::size_t jump = 5) {
  if (long_traj.rows < T) throw std::invalid_argument("windowize: trajectory shorter than T");
  const std::size_t stride = T + jump;
  const std::size_t count = (long_traj.rows - T) / stride + 1;
  std::vector<Matrix> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t start = k * stride;
    out.push_back(long_traj.rows_range(start, start + T));
  }
  return out;
}

/// Adds i.i.d. Gaussian noise with standard deviation sigma to every entry.
inline Sequence add_noise(const Sequence& seq, double sigma, Rng& rng) {
  if (sigma < 0.0) throw std::invalid_argument("add_noise: sigma must be nonnegative");
  Sequence out = seq;
  if (sigma > 0.0)
    for (auto& v : out.values.data) v += sigma * rng.normal();
  return out;
}

/// A full generated benchmark: the mode grid, the seeded mode-to-task
/// assignment, and the per-task train/test splits.
struct DatasetSuite {
  SystemKind system = SystemKind::Sine;
  std::uint64_t seed = 0;
  std::size_t seq_len = 0;       // T
  double dt = 0.0;
  std::size_t jump = 5;
  std::size_t train_per_mode = 0;
  std::size_t test_per_mode = 0;
  std::vector<ModeSpec> modes;                 // canonical grid order
  std::vector<std::vector<int>> task_modes;    // global mode ids per task
  std::vector<TaskDataset> tasks;

  std::size_t obs_dim() const {
    return tasks.empty() || tasks[0].train.empty() ? 0 : tasks[0].train[0].dim();
  }
};

namespace detail {

inline std::vector<ModeSpec> synthetic_mode_grid(SystemKind system) {
  std::vector<ModeSpec> grid;
  switch (system) {
    case SystemKind::Sine:
      for (double A : {3.0, 6.0, 9.0, 12.0, 15.0})
        for (double f : {2.0 / 3.0, 1.0, 4.0 / 3.0})
          grid.push_back({system, {{"A", A}, {"f", f}}, A / 100.0});
      break;
    case SystemKind::LotkaVolterra:
      for (double alpha : {0.25, 0.75})
        for (double beta : {0.25, 0.75})
          for (double gamma : {0.25, 0.75})
            grid.push_back(
                {system,
                 {{"alpha", alpha}, {"beta", beta}, {"gamma", gamma}, {"delta", 0.5}},
                 0.001});
      break;
    case SystemKind::Lorenz:
      for (double rho : {28.0, 42.0, 56.0})
        for (double sigma : {8.0, 12.0})
          for (double beta : {5.0 / 3.0, 13.0 / 3.0})
            grid.push_back(
                {system, {{"sigma", sigma}, {"rho", rho}, {"beta", beta}}, 0.01});
      break;
    default:
      throw std::invalid_argument("synthetic_mode_grid: not a synthetic system");
  }
  return grid;
}

inline Matrix synthetic_long_trajectory(const ModeSpec& mode, std::size_t points, double dt) {
  switch (mode.system) {
    case SystemKind::Sine: {
      std::vector<double> t(points);
      for (std::size_t i = 0; i < points; ++i) t[i] = static_cast<double>(i) * dt;
      return gen_sine(mode.params.at("A"), mode.params.at("f"), t);
    }
    case SystemKind::LotkaVolterra:
      return gen_lotka_volterra(mode.params.at("alpha"), mode.params.at("beta"),
                                mode.params.at("gamma"), mode.params.at("delta"),
                                points - 1, dt);
    case SystemKind::Lorenz:
      return gen_lorenz(mode.params.at("sigma"), mode.params.at("rho"),
                        mode.params.at("beta"), points - 1, dt);
    default:
      throw std::invalid_argument("synthetic_long_trajectory: not a synthetic system");
  }
}

/// Chunks a seeded permutation of mode ids into equal-size groups.
inline std::vector<std::vector<int>> assign_modes_to_tasks(std::size_t n_modes,
                                                           std::size_t n_tasks,
                                                           Rng& rng) {
  auto perm = rng.permutation(n_modes);
  const std::size_t per_task = n_modes / n_tasks;
  std::vector<std::vector<int>> out(n_tasks);
  for (std::size_t t = 0; t < n_tasks; ++t)
    for (std::size_t j = 0; j < per_task; ++j)
      out[t].push_back(static_cast<int>(perm[t * per_task + j]));
  return out;
}

}  // namespace detail

/// Generates one of the three synthetic benchmarks. Everything downstream of
/// the seed is deterministic: the window split, the mode-to-task assignment,
/// and the train-split noise.
inline DatasetSuite build_synthetic_suite(SystemKind system, std::uint64_t seed) {
  DatasetSuite suite;
  suite.system = system;
  suite.seed = seed;
  suite.train_per_mode = 12;
  suite.test_per_mode = 6;
  std::size_t n_tasks = 0;
  switch (system) {
    case SystemKind::Sine:
      suite.seq_len = 15;
      suite.dt = 0.1;
      n_tasks = 5;
      break;
    case SystemKind::LotkaVolterra:
      suite.seq_len = 25;
      suite.dt = 0.4;
      n_tasks = 4;
      break;
    case SystemKind::Lorenz:
      suite.seq_len = 50;
      suite.dt = 0.01;
      n_tasks = 4;
      break;
    default:
      throw std::invalid_argument("build_synthetic_suite: not a synthetic system");
  }
  suite.modes = detail::synthetic_mode_grid(system);
  const std::size_t windows_needed = suite.train_per_mode + suite.test_per_mode;
  const std::size_t points = windows_needed * (suite.seq_len + suite.jump);

  Rng task_rng(seed, 1);
  suite.task_modes = detail::assign_modes_to_tasks(suite.modes.size(), n_tasks, task_rng);

  // Per-mode clean windows, split into train/test with a per-mode stream.
  std::vector<std::vector<Matrix>> train_windows(suite.modes.size());
  std::vector<std::vector<Matrix>> test_windows(suite.modes.size());
  for (std::size_t m = 0; m < suite.modes.size(); ++m) {
    Matrix long_traj = detail::synthetic_long_trajectory(suite.modes[m], points, suite.dt);
    auto windows = windowize(long_traj, suite.seq_len, suite.jump);
    if (windows.size() < windows_needed)
      throw std::runtime_error("build_synthetic_suite: insufficient trajectory length");
    Rng split_rng(seed, 1000 + m);
    auto order = split_rng.permutation(windows.size());
    for (std::size_t k = 0; k < suite.train_per_mode; ++k)
      train_windows[m].push_back(windows[order[k]]);
    for (std::size_t k = 0; k < suite.test_per_mode; ++k)
      test_windows[m].push_back(windows[order[suite.train_per_mode + k]]);
  }

  for (std::size_t t = 0; t < n_tasks; ++t) {
    TaskDataset task;
    task.task_id = static_cast<int>(t);
    for (int mode_id : suite.task_modes[t]) {
      task.mode_ids.push_back(mode_id);
      task.modes.push_back(suite.modes[mode_id]);
      Rng noise_rng(seed, 2000 + static_cast<std::uint64_t>(mode_id));
      for (const auto& w : train_windows[mode_id]) {
        Sequence s{w, suite.dt, mode_id, task.task_id};
        task.train.push_back(add_noise(s, suite.modes[mode_id].noise_sigma, noise_rng));
      }
      for (const auto& w : test_windows[mode_id])
        task.test.push_back(Sequence{w, suite.dt, mode_id, task.task_id});
    }
    suite.tasks.push_back(std::move(task));
  }
  return suite;
}

}  // namespace cldyn
