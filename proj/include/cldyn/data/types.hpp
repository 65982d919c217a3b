#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace cldyn {

/// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::vector<double> row(std::size_t r) const {
    return std::vector<double>(data.begin() + r * cols, data.begin() + (r + 1) * cols);
  }

  void set_row(std::size_t r, const std::vector<double>& v) {
    for (std::size_t c = 0; c < cols; ++c) at(r, c) = v[c];
  }

  Matrix rows_range(std::size_t begin, std::size_t end) const {
    Matrix out(end - begin, cols);
    std::copy(data.begin() + begin * cols, data.begin() + end * cols, out.data.begin());
    return out;
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

enum class SystemKind { Sine, LotkaVolterra, Lorenz, Libras, CharTraj };

inline const char* system_name(SystemKind k) {
  switch (k) {
    case SystemKind::Sine: return "sine";
    case SystemKind::LotkaVolterra: return "lotka";
    case SystemKind::Lorenz: return "lorenz";
    case SystemKind::Libras: return "libras";
    case SystemKind::CharTraj: return "chartraj";
  }
  return "?";
}

inline SystemKind system_from_name(const std::string& s) {
  if (s == "sine") return SystemKind::Sine;
  if (s == "lotka" || s == "lotka-volterra") return SystemKind::LotkaVolterra;
  if (s == "lorenz") return SystemKind::Lorenz;
  if (s == "libras") return SystemKind::Libras;
  if (s == "chartraj" || s == "character-trajectories") return SystemKind::CharTraj;
  throw std::invalid_argument("unknown dataset name: " + s);
}

/// One observed series. The mode and task ids are evaluation bookkeeping;
/// nothing in the models reads them.
struct Sequence {
  Matrix values;  // T x D
  double dt = 0.0;
  int mode_id = -1;
  int task_id = -1;

  std::size_t length() const { return values.rows; }
  std::size_t dim() const { return values.cols; }

  void validate() const {
    if (values.rows < 2) throw std::invalid_argument("Sequence: needs at least 2 steps");
    if (!(dt > 0.0)) throw std::invalid_argument("Sequence: dt must be positive");
    if (!values.all_finite()) throw std::invalid_argument("Sequence: non-finite value");
  }
};

/// Generator settings for one behavioral mode of a system.
struct ModeSpec {
  SystemKind system = SystemKind::Sine;
  std::map<std::string, double> params;
  double noise_sigma = 0.0;
};

struct TaskDataset {
  int task_id = -1;
  std::vector<Sequence> train;
  std::vector<Sequence> test;
  std::vector<ModeSpec> modes;        // specs of modes appearing in this task
  std::vector<int> mode_ids;          // global mode ids, aligned with `modes`
};

}  // namespace cldyn
