#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cldyn/data/synthetic.hpp"
#include "cldyn/data/types.hpp"
#include "cldyn/data/uci.hpp"

namespace cldyn {

/// Shortest round-trippable decimal form of a double.
inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace detail {

inline std::string sequence_csv_header(std::size_t dim) {
  std::string h = "task_id,mode_id,seq_id,t";
  for (std::size_t d = 0; d < dim; ++d) h += ",dim" + std::to_string(d);
  return h;
}

inline void write_split_csv(const std::string& path, const std::vector<Sequence>& seqs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  if (seqs.empty()) return;
  out << sequence_csv_header(seqs[0].dim()) << "\n";
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    const auto& q = seqs[s];
    for (std::size_t t = 0; t < q.length(); ++t) {
      out << q.task_id << ',' << q.mode_id << ',' << s << ',' << t;
      for (std::size_t d = 0; d < q.dim(); ++d) out << ',' << fmt_double(q.values.at(t, d));
      out << "\n";
    }
  }
}

inline std::vector<Sequence> read_split_csv(const std::string& path, double dt) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) return {};
  std::vector<Sequence> seqs;
  long cur_seq = -1;
  std::vector<std::vector<double>> rows;
  int task_id = -1, mode_id = -1;
  auto flush = [&]() {
    if (rows.empty()) return;
    Matrix m(rows.size(), rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r) m.set_row(r, rows[r]);
    seqs.push_back(Sequence{std::move(m), dt, mode_id, task_id});
    rows.clear();
  };
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip(line);
    if (line.empty()) continue;
    auto f = split_csv(line);
    if (f.size() < 5) throw DataFormatError("short row at " + path + ":" + std::to_string(lineno));
    const std::string ctx = path + ":" + std::to_string(lineno);
    const long seq_id = static_cast<long>(parse_double(f[2], ctx));
    if (seq_id != cur_seq) {
      flush();
      cur_seq = seq_id;
      task_id = static_cast<int>(parse_double(f[0], ctx));
      mode_id = static_cast<int>(parse_double(f[1], ctx));
    }
    std::vector<double> vals;
    for (std::size_t i = 4; i < f.size(); ++i) vals.push_back(parse_double(f[i], ctx));
    rows.push_back(std::move(vals));
  }
  flush();
  return seqs;
}

}  // namespace detail

/// Writes one CSV per split per task plus a key-value manifest describing the
/// generator settings and the mode-to-task assignment.
inline void write_dataset(const std::string& dir, const DatasetSuite& suite) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream man(dir + "/manifest.txt");
  if (!man) throw std::runtime_error("cannot write manifest in " + dir);
  man << "cldyn-dataset v1\n";
  man << "system = " << system_name(suite.system) << "\n";
  man << "seed = " << suite.seed << "\n";
  man << "T = " << suite.seq_len << "\n";
  man << "dt = " << fmt_double(suite.dt) << "\n";
  man << "jump = " << suite.jump << "\n";
  man << "modes = " << suite.modes.size() << "\n";
  man << "tasks = " << suite.tasks.size() << "\n";
  man << "train_per_mode = " << suite.train_per_mode << "\n";
  man << "test_per_mode = " << suite.test_per_mode << "\n";
  for (std::size_t m = 0; m < suite.modes.size(); ++m) {
    for (const auto& [k, v] : suite.modes[m].params)
      man << "mode." << m << "." << k << " = " << fmt_double(v) << "\n";
    man << "mode." << m << ".noise_sigma = " << fmt_double(suite.modes[m].noise_sigma) << "\n";
  }
  for (std::size_t t = 0; t < suite.task_modes.size(); ++t) {
    man << "task." << t << ".modes =";
    for (int id : suite.task_modes[t]) man << ' ' << id;
    man << "\n";
  }
  for (const auto& task : suite.tasks) {
    const std::string base = dir + "/task" + std::to_string(task.task_id);
    detail::write_split_csv(base + "_train.csv", task.train);
    detail::write_split_csv(base + "_test.csv", task.test);
  }
}

/// Reads a dataset written by write_dataset.
inline DatasetSuite read_dataset(const std::string& dir) {
  std::ifstream man(dir + "/manifest.txt");
  if (!man) throw DataFormatError("cannot open " + dir + "/manifest.txt");
  std::string line;
  std::getline(man, line);
  if (detail::strip(line) != "cldyn-dataset v1")
    throw DataFormatError("unrecognized manifest header in " + dir);
  std::map<std::string, std::string> kv;
  while (std::getline(man, line)) {
    line = detail::strip(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataFormatError("malformed manifest line: " + line);
    kv[detail::strip(line.substr(0, eq))] = detail::strip(line.substr(eq + 1));
  }
  DatasetSuite suite;
  suite.system = system_from_name(kv.at("system"));
  suite.seed = std::stoull(kv.at("seed"));
  suite.seq_len = std::stoul(kv.at("T"));
  suite.dt = std::stod(kv.at("dt"));
  suite.jump = std::stoul(kv.at("jump"));
  suite.train_per_mode = std::stoul(kv.at("train_per_mode"));
  suite.test_per_mode = std::stoul(kv.at("test_per_mode"));
  const std::size_t n_modes = std::stoul(kv.at("modes"));
  const std::size_t n_tasks = std::stoul(kv.at("tasks"));
  for (std::size_t m = 0; m < n_modes; ++m) {
    ModeSpec spec;
    spec.system = suite.system;
    const std::string prefix = "mode." + std::to_string(m) + ".";
    for (const auto& [k, v] : kv) {
      if (k.rfind(prefix, 0) != 0) continue;
      const std::string name = k.substr(prefix.size());
      if (name == "noise_sigma")
        spec.noise_sigma = std::stod(v);
      else
        spec.params[name] = std::stod(v);
    }
    suite.modes.push_back(std::move(spec));
  }
  for (std::size_t t = 0; t < n_tasks; ++t) {
    std::vector<int> ids;
    std::istringstream is(kv.at("task." + std::to_string(t) + ".modes"));
    int id;
    while (is >> id) ids.push_back(id);
    suite.task_modes.push_back(std::move(ids));
  }
  for (std::size_t t = 0; t < n_tasks; ++t) {
    TaskDataset task;
    task.task_id = static_cast<int>(t);
    task.mode_ids = suite.task_modes[t];
    for (int id : task.mode_ids) task.modes.push_back(suite.modes[id]);
    const std::string base = dir + "/task" + std::to_string(t);
    task.train = detail::read_split_csv(base + "_train.csv", suite.dt);
    task.test = detail::read_split_csv(base + "_test.csv", suite.dt);
    suite.tasks.push_back(std::move(task));
  }
  return suite;
}

}  // namespace cldyn
