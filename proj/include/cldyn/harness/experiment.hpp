#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "cldyn/continual/training.hpp"
#include "cldyn/data/dataset_io.hpp"
#include "cldyn/harness/config.hpp"
#include "cldyn/harness/results.hpp"

namespace cldyn {

/// Builds or loads the dataset named by the config. Synthetic suites are
/// regenerated from the dataset seed; UCI sets load from dataset.path (raw
/// file) or from a pre-generated directory containing a manifest.
inline DatasetSuite build_dataset(const ExperimentConfig& cfg) {
  const SystemKind kind = system_from_name(cfg.dataset);
  if (!cfg.dataset_path.empty() &&
      std::filesystem::exists(cfg.dataset_path + "/manifest.txt"))
    return read_dataset(cfg.dataset_path);
  switch (kind) {
    case SystemKind::Sine:
    case SystemKind::LotkaVolterra:
    case SystemKind::Lorenz:
      return build_synthetic_suite(kind, cfg.dataset_seed);
    case SystemKind::Libras:
      return load_libras(cfg.dataset_path, cfg.dataset_seed);
    case SystemKind::CharTraj:
      return load_char_trajectories(cfg.dataset_path, cfg.dataset_seed);
  }
  throw std::logic_error("build_dataset: unreachable");
}

// Fixed stream tags so every repetition derives the same independent RNGs.
inline std::uint64_t repetition_seed(std::uint64_t run_seed, std::size_t rep) {
  return mix_seed(run_seed, rep);
}
inline Rng rep_order_rng(std::uint64_t rep_seed) { return Rng(rep_seed, 10); }
inline Rng rep_init_rng(std::uint64_t rep_seed) { return Rng(rep_seed, 11); }
inline Rng rep_train_rng(std::uint64_t rep_seed) { return Rng(rep_seed, 12); }
inline std::uint64_t rep_eval_seed(std::uint64_t rep_seed) { return mix_seed(rep_seed, 13); }

struct RepetitionArtifacts {
  RepetitionResult result;
  std::vector<TaskLog> task_logs;
  std::vector<std::string> checkpoints;
};

/// One full continual run: permute the task order with the repetition seed,
/// build a fresh model, train through the tasks, and score the curve.
inline RepetitionArtifacts run_repetition(const ExperimentConfig& cfg,
                                          const DatasetSuite& suite, std::size_t rep,
                                          std::size_t max_tasks = 0) {
  const std::uint64_t seed = repetition_seed(cfg.run_seed, rep);
  RepetitionArtifacts art;
  art.result.seed = seed;

  Rng order_rng = rep_order_rng(seed);
  auto perm = order_rng.permutation(suite.tasks.size());
  const std::size_t n_tasks =
      max_tasks == 0 ? suite.tasks.size() : std::min(max_tasks, suite.tasks.size());
  std::vector<const TaskDataset*> ordered;
  for (std::size_t i = 0; i < n_tasks; ++i) {
    ordered.push_back(&suite.tasks[perm[i]]);
    art.result.task_order.push_back(static_cast<int>(perm[i]));
  }

  ModelConfig mc = cfg.model;
  mc.ssm.obs_dim = suite.obs_dim();
  Rng init_rng = rep_init_rng(seed);
  AnyModel model = make_variant(variant_from_name(cfg.variant), mc, init_rng);

  Rng train_rng = rep_train_rng(seed);
  EvalConfig eval_cfg{cfg.eval_samples, rep_eval_seed(seed)};
  RunResult run = run_continual(model, ordered, cfg.schedule, eval_cfg, train_rng);
  art.result.failed = run.failed;
  art.result.fail_reason = run.fail_reason;
  art.result.curve = std::move(run.curve);
  art.result.curve.seed = seed;
  art.result.curve.variant = cfg.variant;
  if (!run.failed) {
    auto [a_nmse, a_nll] = auc(art.result.curve);
    art.result.auc_nmse = a_nmse;
    art.result.auc_nll = a_nll;
  }
  art.task_logs = std::move(run.task_logs);
  art.checkpoints = std::move(run.checkpoints);
  return art;
}

namespace detail {

inline void write_loss_log(const std::string& path, const TaskLog& log) {
  std::ofstream out(path);
  out << "epoch,recon,kl_x0,kl_theta,kl_pi,total\n";
  for (std::size_t e = 0; e < log.size(); ++e)
    out << e << ',' << fmt_double(log[e].recon) << ',' << fmt_double(log[e].kl_x0) << ','
        << fmt_double(log[e].kl_theta) << ',' << fmt_double(log[e].kl_pi) << ','
        << fmt_double(log[e].total) << '\n';
}

inline void write_curves_csv(const std::string& path, const ResultsRecord& rec) {
  std::ofstream out(path);
  out << "rep,seed,tasks_seen,nmse,nll\n";
  for (std::size_t r = 0; r < rec.reps.size(); ++r) {
    if (rec.reps[r].failed) continue;
    for (const auto& p : rec.reps[r].curve.points)
      out << r << ',' << rec.reps[r].seed << ',' << p.tasks_seen << ','
          << fmt_double(p.nmse) << ',' << fmt_double(p.nll) << '\n';
  }
}

}  // namespace detail

/// Runs all repetitions (optionally across worker threads), aggregates, and
/// writes the results record, curve CSV, per-epoch loss logs, and per-task
/// checkpoints into out_dir (unless empty).
inline ResultsRecord run_experiment(const ExperimentConfig& cfg, const DatasetSuite& suite,
                                    const std::string& out_dir, std::size_t max_tasks = 0) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n_reps = static_cast<std::size_t>(cfg.repetitions);
  std::vector<RepetitionArtifacts> arts(n_reps);
  const int workers = std::max(1, std::min<int>(cfg.parallel, static_cast<int>(n_reps)));
  if (workers <= 1) {
    for (std::size_t r = 0; r < n_reps; ++r) arts[r] = run_repetition(cfg, suite, r, max_tasks);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        for (;;) {
          const std::size_t r = next.fetch_add(1);
          if (r >= n_reps) return;
          arts[r] = run_repetition(cfg, suite, r, max_tasks);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  ResultsRecord rec;
  rec.config_echo = config_echo(cfg);
  rec.variant = cfg.variant;
  for (auto& a : arts) rec.reps.push_back(a.result);
  aggregate_results(rec);
  rec.wallclock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream res(out_dir + "/results.txt");
    write_results(res, rec);
    detail::write_curves_csv(out_dir + "/curves.csv", rec);
    for (std::size_t r = 0; r < n_reps; ++r) {
      for (std::size_t t = 0; t < arts[r].task_logs.size(); ++t)
        detail::write_loss_log(out_dir + "/loss_rep" + std::to_string(r) + "_task" +
                                   std::to_string(t) + ".csv",
                               arts[r].task_logs[t]);
      for (std::size_t t = 0; t < arts[r].checkpoints.size(); ++t) {
        std::ofstream ck(out_dir + "/ckpt_rep" + std::to_string(r) + "_task" +
                         std::to_string(t) + ".txt");
        ck << arts[r].checkpoints[t];
      }
    }
  }
  return rec;
}

}  // namespace cldyn
