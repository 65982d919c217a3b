#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cldyn/core/gaussian.hpp"
#include "cldyn/core/rng.hpp"
#include "cldyn/data/types.hpp"
#include "cldyn/model/ssm.hpp"

namespace cldyn {

/// MSE normalized by the per-sequence variance of the ground-truth target
/// window, pooled over dimensions. Near-constant targets (variance < 1e-12)
/// fall back to the plain MSE; `fallback` reports when that happened.
inline double nmse(const Matrix& pred_mean, const Matrix& truth, bool* fallback = nullptr) {
  if (pred_mean.rows != truth.rows || pred_mean.cols != truth.cols)
    throw std::invalid_argument("nmse: shape mismatch");
  if (truth.rows < 1) throw std::invalid_argument("nmse: empty window");
  const std::size_t n = truth.data.size();
  double mse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pred_mean.data[i] - truth.data[i];
    mse += d * d;
  }
  mse /= n;
  double mean = 0.0;
  for (double v : truth.data) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : truth.data) var += (v - mean) * (v - mean);
  var /= n;
  if (fallback) *fallback = var < 1e-12;
  return var < 1e-12 ? mse : mse / var;
}

/// Negative predictive log-density, averaged per step per dimension.
inline double nll(const std::vector<GaussianDiag>& pred, const Matrix& truth) {
  if (pred.size() != truth.rows) throw std::invalid_argument("nll: step count mismatch");
  double s = 0.0;
  for (std::size_t t = 0; t < truth.rows; ++t) {
    if (pred[t].dim() != truth.cols) throw std::invalid_argument("nll: dim mismatch");
    s += gaussian_logpdf_value(truth.row(t), pred[t]);
  }
  return -s / static_cast<double>(truth.data.size());
}

struct TaskEval {
  int task_id = -1;
  double nmse = 0.0;
  double nll = 0.0;
  std::size_t n_seqs = 0;
};

struct CurvePoint {
  int tasks_seen = 0;
  double nmse = 0.0;
  double nll = 0.0;
  std::vector<TaskEval> per_task;
};

struct LearningCurve {
  std::vector<CurvePoint> points;
  std::uint64_t seed = 0;
  std::string variant;
};

/// Arithmetic mean of the per-task-count metric values.
inline std::pair<double, double> auc(const LearningCurve& curve) {
  if (curve.points.empty()) throw std::invalid_argument("auc: empty curve");
  double a_nmse = 0.0, a_nll = 0.0;
  for (const auto& p : curve.points) {
    a_nmse += p.nmse;
    a_nll += p.nll;
  }
  const double n = static_cast<double>(curve.points.size());
  return {a_nmse / n, a_nll / n};
}

inline double auc_values(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("auc: empty curve");
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

using PredictFn =
    std::function<Predictive(const Matrix& context, std::size_t horizon, Rng& rng)>;

struct EvalScores {
  double nmse = 0.0;
  double nll = 0.0;
  std::vector<double> per_seq_nmse;
  std::vector<double> per_seq_nll;
};

/// Scores a frozen model over test sequences: split each at C, predict the
/// remaining horizon, and average per-sequence NMSE/NLL with equal weights.
/// Each sequence gets its own derived RNG stream so per-sequence scores can be
/// recomputed independently.
inline EvalScores evaluate(const PredictFn& predict_fn,
                           const std::vector<const Sequence*>& seqs, std::size_t context_len,
                           std::uint64_t seed) {
  EvalScores out;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const Sequence& s = *seqs[i];
    if (s.length() <= context_len)
      throw std::invalid_argument("evaluate: sequence not longer than context");
    const std::size_t horizon = s.length() - context_len;
    Matrix context = s.values.rows_range(0, context_len);
    Matrix truth = s.values.rows_range(context_len, s.length());
    Rng rng(seed, i);
    Predictive pred = predict_fn(context, horizon, rng);
    out.per_seq_nmse.push_back(nmse(pred.mean, truth));
    std::vector<GaussianDiag> steps;
    steps.reserve(horizon);
    for (std::size_t t = 0; t < horizon; ++t)
      steps.emplace_back(pred.mean.row(t), pred.var.row(t));
    out.per_seq_nll.push_back(nll(steps, truth));
  }
  if (!seqs.empty()) {
    for (double v : out.per_seq_nmse) out.nmse += v;
    for (double v : out.per_seq_nll) out.nll += v;
    out.nmse /= static_cast<double>(seqs.size());
    out.nll /= static_cast<double>(seqs.size());
  }
  return out;
}

}  // namespace cldyn
