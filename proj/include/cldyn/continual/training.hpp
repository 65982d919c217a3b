#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "cldyn/core/adam.hpp"
#include "cldyn/continual/variants.hpp"
#include "cldyn/metrics/metrics.hpp"

namespace cldyn {

struct TrainSchedule {
  int epochs_per_task = 300;
  int batch_size = 9;
  double learning_rate = 0.005;
  int mc_samples = 1;
  bool reset_adam_per_task = true;
  double grad_clip_norm = 300.0;  // 0 disables clipping

  void validate() const {
    if (epochs_per_task < 0) throw std::invalid_argument("TrainSchedule: negative epochs");
    if (batch_size < 1) throw std::invalid_argument("TrainSchedule: batch_size must be >= 1");
    if (!(learning_rate > 0.0))
      throw std::invalid_argument("TrainSchedule: learning_rate must be positive");
    if (mc_samples < 1) throw std::invalid_argument("TrainSchedule: mc_samples must be >= 1");
    if (grad_clip_norm < 0.0)
      throw std::invalid_argument("TrainSchedule: grad_clip_norm must be >= 0");
  }
};

/// Scales all gradient blocks so their joint L2 norm stays within max_norm.
inline void clip_grad_norm(std::vector<Tensor>& grads, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const auto& g : grads)
    for (double v : g.values()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double scale = max_norm / norm;
  for (auto& g : grads)
    for (double& v : g.values_mut()) v *= scale;
}

struct TrainAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using TaskLog = std::vector<ElboBreakdown>;  // one batch-averaged entry per epoch

/// VCL transfer rule: the learned transition posterior becomes the prior for
/// the next task. Point-weight components simply carry over. Deep copies, so
/// later posterior updates never alias the prior.
inline void vcl_transfer(AnyModel& model) {
  SsmModel& s = model.ssm_inner();
  if (s.qtheta.deterministic) return;  // nothing to transfer beyond the warm start
  s.qtheta.prior_mu = s.qtheta.mu.values();
  s.qtheta.prior_logvar = s.qtheta.logvar.values();
}

/// Minibatch Adam ascent on the task-level ELBO: the per-sequence
/// reconstruction and state KLs are batch-averaged while KL(q_psi || p) enters
/// once per task dataset, i.e. scaled by 1/N per sequence. CDDP models
/// additionally write each training sequence's descriptor to memory right
/// after the gradient step that consumed it.
inline TaskLog train_task(AnyModel& model, const TaskDataset& task,
                          const TrainSchedule& sched, Rng& rng,
                          AdamState* adam = nullptr) {
  sched.validate();
  if (task.train.empty()) throw std::invalid_argument("train_task: empty train split");
  TaskLog log;
  if (sched.epochs_per_task == 0) return log;
  model.ssm_inner().cfg.mc_samples = sched.mc_samples;
  AdamState local;
  AdamState& state = adam ? *adam : local;
  state.lr = sched.learning_rate;
  std::vector<Tensor> params = model.parameters();
  const std::size_t n = task.train.size();
  for (int epoch = 0; epoch < sched.epochs_per_task; ++epoch) {
    auto order = rng.permutation(n);
    ElboBreakdown epoch_sum;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < n; start += sched.batch_size) {
      const std::size_t end = std::min(n, start + sched.batch_size);
      std::vector<Tensor> partials;  // recon - kl_x0 - kl_pi per sequence
      ElboBreakdown batch_sum;
      partials.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        ElboResult e = model_elbo(model, task.train[order[i]], rng);
        partials.push_back(sub(sub(e.recon, e.kl_x0), e.kl_pi));
        const ElboBreakdown v = e.values();
        batch_sum.recon += v.recon;
        batch_sum.kl_x0 += v.kl_x0;
        batch_sum.kl_theta += v.kl_theta;
        batch_sum.kl_pi += v.kl_pi;
        batch_sum.total += v.total;
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      Tensor objective = add(mul_scalar(add_many(partials), inv),
                             mul_scalar(kl_theta_t(model.ssm_inner()),
                                        -1.0 / static_cast<double>(n)));
      Tensor loss = neg(objective);
      if (!std::isfinite(loss.item()))
        throw TrainAbort("train_task: non-finite loss at epoch " + std::to_string(epoch));
      std::vector<Tensor> grads = grad(loss, params);
      clip_grad_norm(grads, sched.grad_clip_norm);
      try {
        adam_step(params, grads, state);
      } catch (const AdamError& e) {
        throw TrainAbort(std::string("train_task: ") + e.what());
      }
      if (model.is_cddp() && model.cddp().memory.write_enabled) {
        for (std::size_t i = start; i < end; ++i)
          observe_and_write(model.cddp(), task.train[order[i]]);
      }
      epoch_sum.recon += batch_sum.recon * inv;
      epoch_sum.kl_x0 += batch_sum.kl_x0 * inv;
      epoch_sum.kl_theta += batch_sum.kl_theta * inv;
      epoch_sum.kl_pi += batch_sum.kl_pi * inv;
      epoch_sum.total += batch_sum.total * inv;
      ++n_batches;
    }
    const double inv_b = 1.0 / static_cast<double>(n_batches);
    log.push_back({epoch_sum.recon * inv_b, epoch_sum.kl_x0 * inv_b,
                   epoch_sum.kl_theta * inv_b, epoch_sum.kl_pi * inv_b,
                   epoch_sum.total * inv_b});
  }
  return log;
}

struct EvalConfig {
  std::size_t n_samples = 30;
  std::uint64_t seed = 0;
};

struct RunResult {
  LearningCurve curve;
  std::vector<TaskLog> task_logs;          // one per trained task
  std::vector<std::string> checkpoints;    // serialized model after each task
  bool failed = false;
  std::string fail_reason;
};

namespace detail {

/// Scores the union of the test splits of the first `seen` tasks, recording
/// per-task and pooled numbers. The model hash must be unchanged afterwards.
inline CurvePoint evaluate_seen_tasks(const AnyModel& model,
                                      const std::vector<const TaskDataset*>& suite,
                                      std::size_t seen, const EvalConfig& cfg) {
  std::vector<const Sequence*> seqs;
  std::vector<int> task_of_seq;
  for (std::size_t j = 0; j < seen; ++j) {
    for (const auto& s : suite[j]->test) {
      seqs.push_back(&s);
      task_of_seq.push_back(static_cast<int>(j));
    }
  }
  const std::size_t C = model.ssm_inner().cfg.context_len;
  EvalScores scores =
      evaluate(predictor(model, cfg.n_samples), seqs, C, mix_seed(cfg.seed, seen));
  CurvePoint point;
  point.tasks_seen = static_cast<int>(seen);
  point.nmse = scores.nmse;
  point.nll = scores.nll;
  for (std::size_t j = 0; j < seen; ++j) {
    TaskEval te;
    te.task_id = suite[j]->task_id;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      if (task_of_seq[i] != static_cast<int>(j)) continue;
      te.nmse += scores.per_seq_nmse[i];
      te.nll += scores.per_seq_nll[i];
      ++te.n_seqs;
    }
    te.nmse /= static_cast<double>(te.n_seqs);
    te.nll /= static_cast<double>(te.n_seqs);
    point.per_task.push_back(te);
  }
  return point;
}

}  // namespace detail

/// The continual-learning protocol: tasks arrive one at a time in the given
/// order; after each, the frozen model is scored on the union of all test
/// splits seen so far.
inline RunResult run_continual(AnyModel& model, const std::vector<const TaskDataset*>& suite,
                               const TrainSchedule& sched, const EvalConfig& eval_cfg,
                               Rng& rng) {
  if (suite.empty()) throw std::invalid_argument("run_continual: empty suite");
  RunResult out;
  AdamState adam;
  for (std::size_t i = 0; i < suite.size(); ++i) {
    if (i > 0 && model.spec.parameter_transfer) vcl_transfer(model);
    if (sched.reset_adam_per_task) adam = AdamState{};
    try {
      out.task_logs.push_back(train_task(model, *suite[i], sched, rng, &adam));
    } catch (const TrainAbort& e) {
      out.failed = true;
      out.fail_reason = e.what();
      return out;
    }
    bool was_writable = false;
    if (model.is_cddp()) {
      was_writable = model.cddp().memory.write_enabled;
      freeze(model.cddp().memory);
    }
    const std::uint64_t before = model.hash();
    out.curve.points.push_back(detail::evaluate_seen_tasks(model, suite, i + 1, eval_cfg));
    if (model.hash() != before)
      throw std::logic_error("run_continual: evaluation mutated the model");
    if (model.is_cddp() && was_writable) thaw(model.cddp().memory);
    out.checkpoints.push_back(model.checkpoint(rng.serialize()));
  }
  return out;
}

}  // namespace cldyn
