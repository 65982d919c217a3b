#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cldyn/core/rng.hpp"
#include "cldyn/data/synthetic.hpp"
#include "cldyn/data/types.hpp"

namespace cldyn {

struct DataFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string strip(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(strip(field));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline double parse_double(const std::string& s, const std::string& context) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataFormatError("malformed numeric field '" + s + "' in " + context);
  }
}

/// Uniform integer subsampling to `target` points, keeping both endpoints.
inline Matrix subsample_rows(const Matrix& m, std::size_t target) {
  Matrix out(target, m.cols);
  for (std::size_t j = 0; j < target; ++j) {
    const std::size_t idx = (target == 1)
        ? 0
        : static_cast<std::size_t>(std::llround(static_cast<double>(j) *
                                                static_cast<double>(m.rows - 1) /
                                                static_cast<double>(target - 1)));
    for (std::size_t c = 0; c < m.cols; ++c) out.at(j, c) = m.at(idx, c);
  }
  return out;
}

/// Groups per-class instances into tasks and fills a DatasetSuite. For each
/// class the first floor(n/2) instances (file order) form the train split and
/// the remainder the test split.
inline DatasetSuite suite_from_class_instances(
    SystemKind system, std::uint64_t seed, double dt, std::size_t seq_len,
    std::size_t n_tasks, std::map<int, std::vector<Matrix>>& by_class) {
  DatasetSuite suite;
  suite.system = system;
  suite.seed = seed;
  suite.seq_len = seq_len;
  suite.dt = dt;
  suite.jump = 0;

  std::vector<int> class_ids;
  for (auto& [cls, seqs] : by_class) {
    if (seqs.size() < 2)
      throw DataFormatError("class " + std::to_string(cls) + " has fewer than 2 instances");
    class_ids.push_back(cls);
  }
  for (int cls : class_ids)
    suite.modes.push_back(ModeSpec{system, {{"class", static_cast<double>(cls)}}, 0.0});

  Rng task_rng(seed, 1);
  suite.task_modes = detail::assign_modes_to_tasks(suite.modes.size(), n_tasks, task_rng);

  for (std::size_t t = 0; t < n_tasks; ++t) {
    TaskDataset task;
    task.task_id = static_cast<int>(t);
    for (int mode_id : suite.task_modes[t]) {
      task.mode_ids.push_back(mode_id);
      task.modes.push_back(suite.modes[mode_id]);
      const auto& seqs = by_class.at(class_ids[mode_id]);
      const std::size_t n_train = seqs.size() / 2;
      for (std::size_t i = 0; i < seqs.size(); ++i) {
        Sequence s{seqs[i], dt, mode_id, task.task_id};
        (i < n_train ? task.train : task.test).push_back(std::move(s));
      }
    }
    suite.tasks.push_back(std::move(task));
  }
  return suite;
}

}  // namespace detail

/// Libras hand-movement data: one row per instance with 90 numeric columns
/// (alternating x, y over 45 frames) followed by an integer class label 1-15.
/// Blank lines and trailing whitespace are tolerated.
inline DatasetSuite load_libras(const std::string& path, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("load_libras: cannot open " + path);
  std::map<int, std::vector<Matrix>> by_class;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip(line);
    if (line.empty()) continue;
    auto fields = detail::split_csv(line);
    if (fields.size() != 91)
      throw DataFormatError("load_libras: expected 91 columns at line " +
                            std::to_string(lineno) + ", got " +
                            std::to_string(fields.size()));
    const std::string ctx = "libras line " + std::to_string(lineno);
    Matrix seq(45, 2);
    for (std::size_t f = 0; f < 45; ++f) {
      seq.at(f, 0) = detail::parse_double(fields[2 * f], ctx);
      seq.at(f, 1) = detail::parse_double(fields[2 * f + 1], ctx);
    }
    const int cls = static_cast<int>(detail::parse_double(fields[90], ctx));
    by_class[cls].push_back(std::move(seq));
  }
  if (by_class.empty()) throw DataFormatError("load_libras: no rows in " + path);
  return detail::suite_from_class_instances(SystemKind::Libras, seed, 7.0 / 45.0, 45, 5,
                                            by_class);
}

/// Character trajectories: rows `instance_id,class,x_vel,y_vel,pen_force`,
/// consecutive rows of one instance in time order. Every instance is
/// subsampled to the 109 uniformly spaced indices used throughout.
inline DatasetSuite load_char_trajectories(const std::string& path, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("load_char_trajectories: cannot open " + path);
  struct RawInstance {
    int cls = 0;
    std::vector<std::array<double, 3>> rows;
  };
  std::vector<RawInstance> instances;
  std::map<std::string, std::size_t> index_of;
  std::string line;
  std::size_t lineno = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip(line);
    if (line.empty()) continue;
    if (first_content) {
      first_content = false;
      if (line.find("instance") != std::string::npos) continue;  // header row
    }
    auto fields = detail::split_csv(line);
    if (fields.size() != 5)
      throw DataFormatError("load_char_trajectories: expected 5 columns at line " +
                            std::to_string(lineno));
    const std::string ctx = "chartraj line " + std::to_string(lineno);
    const std::string& inst = fields[0];
    auto it = index_of.find(inst);
    if (it == index_of.end()) {
      index_of[inst] = instances.size();
      instances.push_back(RawInstance{});
      it = index_of.find(inst);
      instances.back().cls = static_cast<int>(detail::parse_double(fields[1], ctx));
    }
    instances[it->second].rows.push_back({detail::parse_double(fields[2], ctx),
                                          detail::parse_double(fields[3], ctx),
                                          detail::parse_double(fields[4], ctx)});
  }
  if (instances.empty())
    throw DataFormatError("load_char_trajectories: no rows in " + path);

  constexpr std::size_t kLen = 109;
  std::map<int, std::vector<Matrix>> by_class;
  for (const auto& inst : instances) {
    if (inst.rows.size() < kLen)
      throw DataFormatError("load_char_trajectories: instance shorter than " +
                            std::to_string(kLen) + " samples");
    Matrix m(inst.rows.size(), 3);
    for (std::size_t r = 0; r < inst.rows.size(); ++r)
      for (std::size_t c = 0; c < 3; ++c) m.at(r, c) = inst.rows[r][c];
    by_class[inst.cls].push_back(detail::subsample_rows(m, kLen));
  }
  return detail::suite_from_class_instances(SystemKind::CharTraj, seed, 0.05, kLen, 5,
                                            by_class);
}

}  // namespace cldyn
