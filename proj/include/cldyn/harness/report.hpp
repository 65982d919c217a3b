#pragma once

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "cldyn/harness/results.hpp"

namespace cldyn {

/// Text table of AUC summaries, one row per record.
inline std::string render_auc_table(const std::vector<ResultsRecord>& recs) {
  std::ostringstream os;
  os << std::left << std::setw(16) << "variant" << std::setw(10) << "dataset"
     << std::setw(8) << "reps" << std::setw(22) << "AUC NMSE" << std::setw(22) << "AUC NLL"
     << '\n';
  for (const auto& rec : recs) {
    std::size_t ok = 0;
    for (const auto& r : rec.reps)
      if (!r.failed) ++ok;
    char nmse[64], nll[64];
    std::snprintf(nmse, sizeof(nmse), "%.3f +/- %.3f", rec.auc_nmse_mean, rec.auc_nmse_stderr);
    std::snprintf(nll, sizeof(nll), "%.3f +/- %.3f", rec.auc_nll_mean, rec.auc_nll_stderr);
    std::string dataset;
    auto it = rec.config_echo.find("dataset.name");
    if (it != rec.config_echo.end()) dataset = it->second;
    os << std::left << std::setw(16) << rec.variant << std::setw(10) << dataset
       << std::setw(8) << ok << std::setw(22) << nmse << std::setw(22) << nll << '\n';
  }
  return os.str();
}

/// Per-task-count learning-curve table (one block per record).
inline std::string render_curve_table(const ResultsRecord& rec) {
  std::ostringstream os;
  os << rec.variant << " learning curve (mean +/- stderr over "
     << rec.reps.size() << " reps)\n";
  os << std::left << std::setw(12) << "tasks_seen" << std::setw(24) << "NMSE"
     << std::setw(24) << "NLL" << '\n';
  for (const auto& ap : rec.aggregate) {
    char nmse[64], nll[64];
    std::snprintf(nmse, sizeof(nmse), "%.3f +/- %.3f", ap.nmse_mean, ap.nmse_stderr);
    std::snprintf(nll, sizeof(nll), "%.3f +/- %.3f", ap.nll_mean, ap.nll_stderr);
    os << std::left << std::setw(12) << ap.tasks_seen << std::setw(24) << nmse
       << std::setw(24) << nll << '\n';
  }
  return os.str();
}

/// Plot-data CSV: one row per (variant, tasks_seen, metric).
inline void write_plot_data(const std::string& path,
                            const std::vector<ResultsRecord>& recs) {
  std::ofstream out(path);
  out << "variant,tasks_seen,metric,mean,stderr\n";
  for (const auto& rec : recs) {
    for (const auto& ap : rec.aggregate) {
      out << rec.variant << ',' << ap.tasks_seen << ",nmse," << fmt_double(ap.nmse_mean)
          << ',' << fmt_double(ap.nmse_stderr) << '\n';
      out << rec.variant << ',' << ap.tasks_seen << ",nll," << fmt_double(ap.nll_mean)
          << ',' << fmt_double(ap.nll_stderr) << '\n';
    }
  }
}

/// Summary CSV mirroring the AUC table.
inline void write_auc_csv(const std::string& path, const std::vector<ResultsRecord>& recs) {
  std::ofstream out(path);
  out << "variant,dataset,reps_ok,auc_nmse_mean,auc_nmse_stderr,auc_nll_mean,auc_nll_stderr\n";
  for (const auto& rec : recs) {
    std::size_t ok = 0;
    for (const auto& r : rec.reps)
      if (!r.failed) ++ok;
    std::string dataset;
    auto it = rec.config_echo.find("dataset.name");
    if (it != rec.config_echo.end()) dataset = it->second;
    out << rec.variant << ',' << dataset << ',' << ok << ','
        << fmt_double(rec.auc_nmse_mean) << ',' << fmt_double(rec.auc_nmse_stderr) << ','
        << fmt_double(rec.auc_nll_mean) << ',' << fmt_double(rec.auc_nll_stderr) << '\n';
  }
}

}  // namespace cldyn
