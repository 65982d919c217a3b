// Command-line front end: dataset generation, continual training runs, the
// ablation grid, checkpoint re-scoring, and table/plot-data rendering.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cldyn/cldyn.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string dataset;
  std::string variant;
  std::string out_dir;
  long long seed = -1;
  int reps = -1;
  int parallel = -1;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "configuration file (key = value lines)");
  cmd->add_option("--dataset", f.dataset, "dataset name: sine|lotka|lorenz|libras|chartraj");
  cmd->add_option("--variant", f.variant,
                  "model variant: rnn|vcl-bssm|cddp|cddp-transfer|cddp-zeros|cddp-ones|cddp-twos");
  cmd->add_option("--out", f.out_dir, "output directory");
  cmd->add_option("--seed", f.seed, "base seed");
  cmd->add_option("--reps", f.reps, "number of repetitions");
  cmd->add_option("--parallel", f.parallel, "worker threads for repetitions");
}

cldyn::ExperimentConfig make_config(const CommonFlags& f) {
  std::map<std::string, std::string> kv;
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    if (!in) throw cldyn::ConfigError("cannot open config file: " + f.config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    kv = cldyn::parse_config_text(ss.str());
  }
  if (!f.dataset.empty()) kv["dataset.name"] = f.dataset;
  if (!f.variant.empty()) kv["model.variant"] = f.variant;
  if (!f.out_dir.empty()) kv["run.out"] = f.out_dir;
  if (f.seed >= 0) kv["run.seed"] = std::to_string(f.seed);
  if (f.reps >= 0) kv["run.repetitions"] = std::to_string(f.reps);
  if (f.parallel >= 0) kv["run.parallel"] = std::to_string(f.parallel);
  return cldyn::config_from_map(kv);
}

std::string run_dir_for(const cldyn::ExperimentConfig& cfg) {
  return cfg.out_dir + "/" + cfg.dataset + "_" + cfg.variant + "_seed" +
         std::to_string(cfg.run_seed);
}

int cmd_gen_data(const CommonFlags& f) {
  cldyn::ExperimentConfig cfg = make_config(f);
  // For gen-data, --seed controls the dataset seed directly.
  if (f.seed >= 0) cfg.dataset_seed = static_cast<std::uint64_t>(f.seed);
  cldyn::DatasetSuite suite = cldyn::build_dataset(cfg);
  const std::string dir =
      (f.out_dir.empty() ? std::string("data") : f.out_dir) + "/" + cfg.dataset;
  cldyn::write_dataset(dir, suite);
  std::size_t train = 0, test = 0;
  for (const auto& t : suite.tasks) {
    train += t.train.size();
    test += t.test.size();
  }
  std::cout << "wrote " << dir << ": " << suite.modes.size() << " modes, "
            << suite.tasks.size() << " tasks, " << train << " train / " << test
            << " test sequences\n";
  return 0;
}

int cmd_train(const CommonFlags& f) {
  cldyn::ExperimentConfig cfg = make_config(f);
  cldyn::DatasetSuite suite = cldyn::build_dataset(cfg);
  const std::string dir = run_dir_for(cfg);
  cldyn::ResultsRecord rec = cldyn::run_experiment(cfg, suite, dir);
  std::cout << cldyn::render_auc_table({rec});
  std::cout << cldyn::render_curve_table(rec);
  std::cout << "results written to " << dir << "\n";
  for (const auto& r : rec.reps)
    if (r.failed) std::cout << "note: seed " << r.seed << " failed: " << r.fail_reason << "\n";
  return 0;
}

int cmd_eval(const CommonFlags& f, bool check) {
  cldyn::ExperimentConfig cfg = make_config(f);
  const std::string dir = run_dir_for(cfg);
  std::ifstream res_in(dir + "/results.txt");
  if (!res_in) throw std::runtime_error("no results.txt under " + dir + "; run train first");
  cldyn::ResultsRecord rec = cldyn::read_results(res_in);
  cldyn::DatasetSuite suite = cldyn::build_dataset(cfg);

  bool all_ok = true;
  for (std::size_t r = 0; r < rec.reps.size(); ++r) {
    const auto& rep = rec.reps[r];
    if (rep.failed || rep.curve.points.empty()) continue;
    const std::size_t n_tasks = rep.curve.points.size();
    const std::string ckpt_path =
        dir + "/ckpt_rep" + std::to_string(r) + "_task" + std::to_string(n_tasks - 1) + ".txt";
    std::ifstream ck(ckpt_path);
    if (!ck) throw std::runtime_error("missing checkpoint " + ckpt_path);
    std::stringstream ss;
    ss << ck.rdbuf();
    cldyn::AnyModel model;
    model.spec = cldyn::variant_from_name(rec.variant);
    if (cldyn::checkpoint_kind(ss.str()) == "cddp") {
      std::istringstream is(ss.str());
      model.model = cldyn::load_cddp_checkpoint(is);
    } else {
      std::istringstream is(ss.str());
      model.model = cldyn::load_ssm_checkpoint(is);
    }
    std::vector<const cldyn::TaskDataset*> ordered;
    for (std::size_t i = 0; i < n_tasks; ++i)
      ordered.push_back(&suite.tasks[rep.task_order[i]]);
    cldyn::EvalConfig ecfg{cfg.eval_samples, cldyn::rep_eval_seed(rep.seed)};
    cldyn::CurvePoint point =
        cldyn::detail::evaluate_seen_tasks(model, ordered, n_tasks, ecfg);
    const auto& stored = rep.curve.points.back();
    const double d_nmse = std::abs(point.nmse - stored.nmse);
    const double d_nll = std::abs(point.nll - stored.nll);
    std::cout << "rep " << r << ": nmse " << point.nmse << " (stored " << stored.nmse
              << "), nll " << point.nll << " (stored " << stored.nll << ")\n";
    if (d_nmse > 1e-9 || d_nll > 1e-9) all_ok = false;
  }
  if (check) {
    if (!all_ok) {
      std::cout << "check FAILED: re-scored metrics differ from the stored record\n";
      return 3;
    }
    std::cout << "check passed: re-scored metrics match the stored record\n";
  }
  return 0;
}

int cmd_ablate(const CommonFlags& f) {
  CommonFlags base = f;
  std::vector<cldyn::ResultsRecord> recs;
  cldyn::ExperimentConfig probe = make_config(base);
  cldyn::DatasetSuite suite = cldyn::build_dataset(probe);
  for (const std::string& name : cldyn::ablation_variant_names()) {
    base.variant = name;
    cldyn::ExperimentConfig cfg = make_config(base);
    const std::string dir = run_dir_for(cfg);
    recs.push_back(cldyn::run_experiment(cfg, suite, dir));
    std::cout << "done: " << name << "\n";
  }
  std::cout << cldyn::render_auc_table(recs);
  const std::string out = probe.out_dir.empty() ? "." : probe.out_dir;
  cldyn::write_auc_csv(out + "/ablation.csv", recs);
  cldyn::write_plot_data(out + "/ablation_plotdata.csv", recs);
  std::cout << "summary written to " << out << "/ablation.csv\n";
  return 0;
}

int cmd_report(const CommonFlags& f, std::vector<std::string> paths) {
  if (!f.out_dir.empty()) {
    for (const auto& entry : fs::recursive_directory_iterator(f.out_dir))
      if (entry.is_regular_file() && entry.path().filename() == "results.txt")
        paths.push_back(entry.path().string());
  }
  if (paths.empty()) throw std::runtime_error("report: no results files given or found");
  std::vector<cldyn::ResultsRecord> recs;
  for (const auto& p : paths) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot open " + p);
    recs.push_back(cldyn::read_results(in));
  }
  std::cout << cldyn::render_auc_table(recs);
  for (const auto& rec : recs) std::cout << "\n" << cldyn::render_curve_table(rec);
  const std::string out = f.out_dir.empty() ? "." : f.out_dir;
  cldyn::write_plot_data(out + "/plotdata.csv", recs);
  cldyn::write_auc_csv(out + "/summary.csv", recs);
  std::cout << "\nplot data written to " << out << "/plotdata.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continual learning laboratory for multi-modal dynamical systems"};
  app.require_subcommand(1);

  CommonFlags f;
  bool check = false;
  std::vector<std::string> report_paths;

  CLI::App* gen = app.add_subcommand("gen-data", "generate a dataset to CSV + manifest");
  add_common(gen, f);
  CLI::App* train = app.add_subcommand("train", "run continual training repetitions");
  add_common(train, f);
  CLI::App* eval_cmd = app.add_subcommand("eval", "re-score stored checkpoints");
  add_common(eval_cmd, f);
  eval_cmd->add_flag("--check", check, "exit 3 if re-scored metrics differ from the record");
  CLI::App* ablate = app.add_subcommand("ablate", "run the entire variant grid");
  add_common(ablate, f);
  CLI::App* report = app.add_subcommand("report", "render tables and plot data");
  add_common(report, f);
  report->add_option("paths", report_paths, "results.txt files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(f);
    if (train->parsed()) return cmd_train(f);
    if (eval_cmd->parsed()) return cmd_eval(f, check);
    if (ablate->parsed()) return cmd_ablate(f);
    if (report->parsed()) return cmd_report(f, report_paths);
  } catch (const cldyn::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
