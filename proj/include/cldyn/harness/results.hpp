#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cldyn/data/dataset_io.hpp"
#include "cldyn/metrics/metrics.hpp"

namespace cldyn {

struct RepetitionResult {
  std::uint64_t seed = 0;
  bool failed = false;
  std::string fail_reason;
  std::vector<int> task_order;  // presentation order of task ids
  LearningCurve curve;
  double auc_nmse = 0.0;
  double auc_nll = 0.0;
};

struct AggregatePoint {
  int tasks_seen = 0;
  double nmse_mean = 0.0, nmse_stderr = 0.0;
  double nll_mean = 0.0, nll_stderr = 0.0;
};

struct ResultsRecord {
  std::map<std::string, std::string> config_echo;
  std::string variant;
  std::string build_id = "cldyn 0.1.0";
  std::vector<RepetitionResult> reps;
  std::vector<AggregatePoint> aggregate;  // over successful reps
  double auc_nmse_mean = 0.0, auc_nmse_stderr = 0.0;
  double auc_nll_mean = 0.0, auc_nll_stderr = 0.0;
  double wallclock_seconds = 0.0;
};

inline std::pair<double, double> mean_stderr(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return {m, sd / std::sqrt(static_cast<double>(v.size()))};
}

/// Recomputes aggregate rows and AUC summaries from the stored repetitions.
inline void aggregate_results(ResultsRecord& rec) {
  rec.aggregate.clear();
  std::size_t n_points = 0;
  for (const auto& r : rec.reps)
    if (!r.failed) n_points = std::max(n_points, r.curve.points.size());
  for (std::size_t p = 0; p < n_points; ++p) {
    std::vector<double> nmses, nlls;
    for (const auto& r : rec.reps) {
      if (r.failed || p >= r.curve.points.size()) continue;
      nmses.push_back(r.curve.points[p].nmse);
      nlls.push_back(r.curve.points[p].nll);
    }
    AggregatePoint ap;
    ap.tasks_seen = static_cast<int>(p + 1);
    std::tie(ap.nmse_mean, ap.nmse_stderr) = mean_stderr(nmses);
    std::tie(ap.nll_mean, ap.nll_stderr) = mean_stderr(nlls);
    rec.aggregate.push_back(ap);
  }
  std::vector<double> auc_nmse, auc_nll;
  for (const auto& r : rec.reps) {
    if (r.failed) continue;
    auc_nmse.push_back(r.auc_nmse);
    auc_nll.push_back(r.auc_nll);
  }
  std::tie(rec.auc_nmse_mean, rec.auc_nmse_stderr) = mean_stderr(auc_nmse);
  std::tie(rec.auc_nll_mean, rec.auc_nll_stderr) = mean_stderr(auc_nll);
}

inline void write_results(std::ostream& os, const ResultsRecord& rec) {
  os << "cldyn-results v1\n";
  for (const auto& [k, v] : rec.config_echo) os << "config." << k << " = " << v << '\n';
  os << "variant = " << rec.variant << '\n';
  os << "build = " << rec.build_id << '\n';
  os << "repetitions = " << rec.reps.size() << '\n';
  for (std::size_t r = 0; r < rec.reps.size(); ++r) {
    const auto& rep = rec.reps[r];
    const std::string p = "rep." + std::to_string(r) + ".";
    os << p << "seed = " << rep.seed << '\n';
    os << p << "status = " << (rep.failed ? "failed" : "ok") << '\n';
    if (rep.failed) os << p << "fail_reason = " << rep.fail_reason << '\n';
    os << p << "task_order =";
    for (int t : rep.task_order) os << ' ' << t;
    os << '\n';
    for (std::size_t q = 0; q < rep.curve.points.size(); ++q) {
      const auto& pt = rep.curve.points[q];
      const std::string pp = p + "point." + std::to_string(q) + ".";
      os << pp << "tasks_seen = " << pt.tasks_seen << '\n';
      os << pp << "nmse = " << fmt_double(pt.nmse) << '\n';
      os << pp << "nll = " << fmt_double(pt.nll) << '\n';
      for (std::size_t j = 0; j < pt.per_task.size(); ++j) {
        const auto& te = pt.per_task[j];
        const std::string tp = pp + "task." + std::to_string(j) + ".";
        os << tp << "id = " << te.task_id << '\n';
        os << tp << "nmse = " << fmt_double(te.nmse) << '\n';
        os << tp << "nll = " << fmt_double(te.nll) << '\n';
        os << tp << "n = " << te.n_seqs << '\n';
      }
    }
    if (!rep.failed) {
      os << p << "auc_nmse = " << fmt_double(rep.auc_nmse) << '\n';
      os << p << "auc_nll = " << fmt_double(rep.auc_nll) << '\n';
    }
  }
  for (const auto& ap : rec.aggregate) {
    const std::string p = "aggregate." + std::to_string(ap.tasks_seen) + ".";
    os << p << "nmse_mean = " << fmt_double(ap.nmse_mean) << '\n';
    os << p << "nmse_stderr = " << fmt_double(ap.nmse_stderr) << '\n';
    os << p << "nll_mean = " << fmt_double(ap.nll_mean) << '\n';
    os << p << "nll_stderr = " << fmt_double(ap.nll_stderr) << '\n';
  }
  os << "auc.nmse_mean = " << fmt_double(rec.auc_nmse_mean) << '\n';
  os << "auc.nmse_stderr = " << fmt_double(rec.auc_nmse_stderr) << '\n';
  os << "auc.nll_mean = " << fmt_double(rec.auc_nll_mean) << '\n';
  os << "auc.nll_stderr = " << fmt_double(rec.auc_nll_stderr) << '\n';
  os << "wallclock_seconds = " << fmt_double(rec.wallclock_seconds) << '\n';
}

inline ResultsRecord read_results(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || detail::strip(line) != "cldyn-results v1")
    throw std::runtime_error("results: bad header");
  std::map<std::string, std::string> kv;
  while (std::getline(is, line)) {
    line = detail::strip(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("results: bad line " + line);
    kv[detail::strip(line.substr(0, eq))] = detail::strip(line.substr(eq + 1));
  }
  ResultsRecord rec;
  for (const auto& [k, v] : kv)
    if (k.rfind("config.", 0) == 0) rec.config_echo[k.substr(7)] = v;
  if (kv.count("variant")) rec.variant = kv.at("variant");
  if (kv.count("build")) rec.build_id = kv.at("build");
  if (kv.count("wallclock_seconds")) rec.wallclock_seconds = std::stod(kv.at("wallclock_seconds"));
  const std::size_t n_reps = kv.count("repetitions") ? std::stoul(kv.at("repetitions")) : 0;
  for (std::size_t r = 0; r < n_reps; ++r) {
    const std::string p = "rep." + std::to_string(r) + ".";
    RepetitionResult rep;
    rep.seed = std::stoull(kv.at(p + "seed"));
    rep.failed = kv.at(p + "status") == "failed";
    if (rep.failed && kv.count(p + "fail_reason")) rep.fail_reason = kv.at(p + "fail_reason");
    {
      std::istringstream ts(kv.at(p + "task_order"));
      int t;
      while (ts >> t) rep.task_order.push_back(t);
    }
    for (std::size_t q = 0;; ++q) {
      const std::string pp = p + "point." + std::to_string(q) + ".";
      if (!kv.count(pp + "tasks_seen")) break;
      CurvePoint pt;
      pt.tasks_seen = std::stoi(kv.at(pp + "tasks_seen"));
      pt.nmse = std::stod(kv.at(pp + "nmse"));
      pt.nll = std::stod(kv.at(pp + "nll"));
      for (std::size_t j = 0;; ++j) {
        const std::string tp = pp + "task." + std::to_string(j) + ".";
        if (!kv.count(tp + "id")) break;
        TaskEval te;
        te.task_id = std::stoi(kv.at(tp + "id"));
        te.nmse = std::stod(kv.at(tp + "nmse"));
        te.nll = std::stod(kv.at(tp + "nll"));
        te.n_seqs = std::stoul(kv.at(tp + "n"));
        pt.per_task.push_back(te);
      }
      rep.curve.points.push_back(std::move(pt));
    }
    rep.curve.seed = rep.seed;
    rep.curve.variant = rec.variant;
    if (kv.count(p + "auc_nmse")) rep.auc_nmse = std::stod(kv.at(p + "auc_nmse"));
    if (kv.count(p + "auc_nll")) rep.auc_nll = std::stod(kv.at(p + "auc_nll"));
    rec.reps.push_back(std::move(rep));
  }
  for (std::size_t q = 1;; ++q) {
    const std::string p = "aggregate." + std::to_string(q) + ".";
    if (!kv.count(p + "nmse_mean")) break;
    AggregatePoint ap;
    ap.tasks_seen = static_cast<int>(q);
    ap.nmse_mean = std::stod(kv.at(p + "nmse_mean"));
    ap.nmse_stderr = std::stod(kv.at(p + "nmse_stderr"));
    ap.nll_mean = std::stod(kv.at(p + "nll_mean"));
    ap.nll_stderr = std::stod(kv.at(p + "nll_stderr"));
    rec.aggregate.push_back(ap);
  }
  if (kv.count("auc.nmse_mean")) {
    rec.auc_nmse_mean = std::stod(kv.at("auc.nmse_mean"));
    rec.auc_nmse_stderr = std::stod(kv.at("auc.nmse_stderr"));
    rec.auc_nll_mean = std::stod(kv.at("auc.nll_mean"));
    rec.auc_nll_stderr = std::stod(kv.at("auc.nll_stderr"));
  }
  return rec;
}

inline std::string results_string(const ResultsRecord& rec) {
  std::ostringstream os;
  write_results(os, rec);
  return os.str();
}

/// Content hash for determinism checks; wall-clock and timestamp lines are
/// excluded by key.
inline std::uint64_t results_hash(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind("wallclock_seconds", 0) == 0 || line.rfind("timestamp", 0) == 0) continue;
    for (unsigned char c : line) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= '\n';
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace cldyn
