#pragma once

#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cldyn/continual/training.hpp"
#include "cldyn/continual/variants.hpp"
#include "cldyn/data/types.hpp"
#include "cldyn/data/uci.hpp"

namespace cldyn {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat `key = value` text with dotted sections and `#` comments.
inline std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::strip(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::strip(line.substr(0, eq));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    kv[key] = detail::strip(line.substr(eq + 1));
  }
  return kv;
}

struct ExperimentConfig {
  std::string dataset = "sine";
  std::uint64_t dataset_seed = 1;
  std::string dataset_path;  // raw UCI file (libras/chartraj) or pre-generated dir
  std::string variant = "cddp";
  ModelConfig model;
  TrainSchedule schedule;
  std::uint64_t run_seed = 0;
  int repetitions = 10;
  int parallel = 1;
  std::size_t eval_samples = 30;
  std::string out_dir = "runs";
};

/// Paper-protocol defaults for each dataset; everything is overridable from
/// the config file.
inline ExperimentConfig default_config(const std::string& dataset_name) {
  ExperimentConfig c;
  c.dataset = dataset_name;
  SsmConfig& s = c.model.ssm;
  const SystemKind kind = system_from_name(dataset_name);
  switch (kind) {
    case SystemKind::Sine:
      s = SsmConfig{6, 1, 5, {}, {}, 40, 0.1, 0.1, false, 1};
      c.model.memory_size = 20;
      c.schedule = {300, 9, 0.005, 1, true};
      break;
    case SystemKind::LotkaVolterra:
      s = SsmConfig{6, 2, 8, {}, {}, 40, 0.1, 0.1, false, 1};
      c.model.memory_size = 10;
      c.schedule = {750, 9, 0.001, 1, true};
      break;
    case SystemKind::Lorenz:
      s = SsmConfig{8, 3, 16, {90, 90}, {90, 90}, 90, 0.1, 0.1, false, 1};
      c.model.memory_size = 15;
      c.schedule = {500, 9, 0.0005, 1, true};
      break;
    case SystemKind::Libras:
      s = SsmConfig{8, 2, 15, {}, {}, 40, 0.1, 0.1, false, 1};
      c.model.memory_size = 20;
      c.schedule = {300, 9, 0.001, 1, true};
      break;
    case SystemKind::CharTraj:
      s = SsmConfig{8, 3, 35, {90, 90}, {90, 90}, 90, 0.1, 0.1, false, 1};
      c.model.memory_size = 30;
      c.schedule = {2000, 64, 0.001, 1, true};
      break;
  }
  return c;
}

namespace detail {

inline bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw ConfigError("expected boolean, got '" + v + "'");
}

}  // namespace detail

/// Builds an ExperimentConfig from parsed keys. Unknown keys are errors, and
/// every missing/invalid key is reported in one pass.
inline ExperimentConfig config_from_map(const std::map<std::string, std::string>& kv) {
  std::vector<std::string> errors;
  auto it = kv.find("dataset.name");
  if (it == kv.end()) errors.push_back("missing required key: dataset.name");
  ExperimentConfig c;
  try {
    c = default_config(it == kv.end() ? "sine" : it->second);
  } catch (const std::exception& e) {
    errors.push_back(e.what());
  }

  const std::set<std::string> known = {
      "dataset.name",        "dataset.seed",        "dataset.path",
      "model.variant",       "model.latent_dim",    "model.context_len",
      "model.encoder_hidden", "model.decoder_hidden", "model.transition_hidden",
      "model.transition_var", "model.obs_var",      "model.learn_obs_var",
      "model.mc_samples",    "model.memory_size",   "model.alpha0",
      "model.slot_init_std", "train.epochs",        "train.batch_size",
      "train.lr",            "train.mc_samples",    "train.reset_adam_per_task",
      "train.grad_clip",
      "run.seed",            "run.repetitions",     "run.parallel",
      "run.out",             "eval.samples"};
  for (const auto& [k, v] : kv)
    if (!known.count(k)) errors.push_back("unknown config key: " + k);

  auto get = [&](const std::string& key, auto&& apply) {
    auto i = kv.find(key);
    if (i == kv.end()) return;
    try {
      apply(i->second);
    } catch (const std::exception& e) {
      errors.push_back("bad value for " + key + ": " + e.what());
    }
  };
  get("dataset.seed", [&](const std::string& v) { c.dataset_seed = std::stoull(v); });
  get("dataset.path", [&](const std::string& v) { c.dataset_path = v; });
  get("model.variant", [&](const std::string& v) {
    variant_from_name(v);  // throws on unknown names
    c.variant = v;
  });
  get("model.latent_dim", [&](const std::string& v) { c.model.ssm.latent_dim = std::stoul(v); });
  get("model.context_len", [&](const std::string& v) { c.model.ssm.context_len = std::stoul(v); });
  get("model.encoder_hidden",
      [&](const std::string& v) { c.model.ssm.encoder_hidden = detail::parse_sizes(v); });
  get("model.decoder_hidden",
      [&](const std::string& v) { c.model.ssm.decoder_hidden = detail::parse_sizes(v); });
  get("model.transition_hidden",
      [&](const std::string& v) { c.model.ssm.transition_hidden = std::stoul(v); });
  get("model.transition_var",
      [&](const std::string& v) { c.model.ssm.transition_var = std::stod(v); });
  get("model.obs_var", [&](const std::string& v) { c.model.ssm.obs_var = std::stod(v); });
  get("model.learn_obs_var",
      [&](const std::string& v) { c.model.ssm.learn_obs_var = detail::parse_bool(v); });
  get("model.mc_samples", [&](const std::string& v) { c.model.ssm.mc_samples = std::stoi(v); });
  get("model.memory_size", [&](const std::string& v) { c.model.memory_size = std::stoul(v); });
  get("model.alpha0", [&](const std::string& v) { c.model.alpha0 = std::stod(v); });
  get("model.slot_init_std",
      [&](const std::string& v) { c.model.slot_init_std = std::stod(v); });
  get("train.epochs", [&](const std::string& v) { c.schedule.epochs_per_task = std::stoi(v); });
  get("train.batch_size", [&](const std::string& v) { c.schedule.batch_size = std::stoi(v); });
  get("train.lr", [&](const std::string& v) { c.schedule.learning_rate = std::stod(v); });
  get("train.mc_samples", [&](const std::string& v) { c.schedule.mc_samples = std::stoi(v); });
  get("train.grad_clip",
      [&](const std::string& v) { c.schedule.grad_clip_norm = std::stod(v); });
  get("train.reset_adam_per_task",
      [&](const std::string& v) { c.schedule.reset_adam_per_task = detail::parse_bool(v); });
  get("run.seed", [&](const std::string& v) { c.run_seed = std::stoull(v); });
  get("run.repetitions", [&](const std::string& v) { c.repetitions = std::stoi(v); });
  get("run.parallel", [&](const std::string& v) { c.parallel = std::stoi(v); });
  get("run.out", [&](const std::string& v) { c.out_dir = v; });
  get("eval.samples", [&](const std::string& v) { c.eval_samples = std::stoul(v); });

  const SystemKind kind = system_from_name(c.dataset);
  if ((kind == SystemKind::Libras || kind == SystemKind::CharTraj) && c.dataset_path.empty())
    errors.push_back("missing required key: dataset.path (needed for " + c.dataset + ")");

  if (!errors.empty()) {
    std::string msg = "configuration errors:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  return c;
}

inline ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_map(parse_config_text(ss.str()));
}

/// Config echo for results records, in canonical key order.
inline std::map<std::string, std::string> config_echo(const ExperimentConfig& c) {
  std::map<std::string, std::string> kv;
  kv["dataset.name"] = c.dataset;
  kv["dataset.seed"] = std::to_string(c.dataset_seed);
  if (!c.dataset_path.empty()) kv["dataset.path"] = c.dataset_path;
  kv["model.variant"] = c.variant;
  kv["model.latent_dim"] = std::to_string(c.model.ssm.latent_dim);
  kv["model.context_len"] = std::to_string(c.model.ssm.context_len);
  kv["model.encoder_hidden"] = detail::join_sizes(c.model.ssm.encoder_hidden);
  kv["model.decoder_hidden"] = detail::join_sizes(c.model.ssm.decoder_hidden);
  kv["model.transition_hidden"] = std::to_string(c.model.ssm.transition_hidden);
  kv["model.transition_var"] = fmt_double(c.model.ssm.transition_var);
  kv["model.obs_var"] = fmt_double(c.model.ssm.obs_var);
  kv["model.learn_obs_var"] = c.model.ssm.learn_obs_var ? "1" : "0";
  kv["model.memory_size"] = std::to_string(c.model.memory_size);
  kv["model.alpha0"] = fmt_double(c.model.alpha0);
  kv["model.slot_init_std"] = fmt_double(c.model.slot_init_std);
  kv["train.epochs"] = std::to_string(c.schedule.epochs_per_task);
  kv["train.batch_size"] = std::to_string(c.schedule.batch_size);
  kv["train.lr"] = fmt_double(c.schedule.learning_rate);
  kv["train.mc_samples"] = std::to_string(c.schedule.mc_samples);
  kv["train.grad_clip"] = fmt_double(c.schedule.grad_clip_norm);
  kv["train.reset_adam_per_task"] = c.schedule.reset_adam_per_task ? "1" : "0";
  kv["run.seed"] = std::to_string(c.run_seed);
  kv["run.repetitions"] = std::to_string(c.repetitions);
  kv["eval.samples"] = std::to_string(c.eval_samples);
  return kv;
}

}  // namespace cldyn
