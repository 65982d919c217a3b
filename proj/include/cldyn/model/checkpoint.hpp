#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cldyn/data/dataset_io.hpp"
#include "cldyn/model/cddp.hpp"
#include "cldyn/model/ssm.hpp"

namespace cldyn {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void write_vector(std::ostream& os, const std::string& name,
                         const std::vector<double>& v) {
  os << "vec " << name << ' ' << v.size() << '\n';
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << fmt_double(v[i]);
  os << '\n';
}

inline void write_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
  os << "tensor " << name;
  for (auto d : t.shape()) os << ' ' << d;
  os << '\n';
  const auto& v = t.values();
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << fmt_double(v[i]);
  os << '\n';
}

struct CheckpointData {
  std::map<std::string, std::string> keys;
  std::map<std::string, std::vector<double>> vectors;  // tensors and vecs by name
  std::map<std::string, Shape> shapes;

  const std::string& key(const std::string& k) const {
    auto it = keys.find(k);
    if (it == keys.end()) throw CheckpointError("checkpoint: missing key " + k);
    return it->second;
  }

  std::vector<double> vec(const std::string& k) const {
    auto it = vectors.find(k);
    if (it == vectors.end()) throw CheckpointError("checkpoint: missing tensor " + k);
    return it->second;
  }

  void fill(const std::string& k, Tensor& t) const {
    auto v = vec(k);
    if (v.size() != t.size())
      throw CheckpointError("checkpoint: size mismatch for " + k);
    t.values_mut() = std::move(v);
  }
};

inline CheckpointData read_checkpoint_stream(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || strip(line) != "cldyn-checkpoint v1")
    throw CheckpointError("checkpoint: bad header");
  CheckpointData data;
  while (std::getline(is, line)) {
    line = strip(line);
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "tensor" || tag == "vec") {
      std::string name;
      ls >> name;
      Shape shape;
      std::size_t d;
      while (ls >> d) shape.push_back(d);
      std::string payload;
      if (!std::getline(is, payload)) throw CheckpointError("checkpoint: truncated " + name);
      std::istringstream ps(payload);
      std::vector<double> v(shape_numel(shape));
      for (auto& x : v)
        if (!(ps >> x)) throw CheckpointError("checkpoint: short payload for " + name);
      data.vectors[name] = std::move(v);
      data.shapes[name] = std::move(shape);
    } else {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw CheckpointError("checkpoint: bad line " + line);
      data.keys[strip(line.substr(0, eq))] = strip(line.substr(eq + 1));
    }
  }
  return data;
}

inline void write_mlp(std::ostream& os, const std::string& prefix, const Mlp& mlp) {
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    write_tensor(os, prefix + "." + std::to_string(i) + ".W", mlp.layers[i].W);
    write_tensor(os, prefix + "." + std::to_string(i) + ".b", mlp.layers[i].b);
  }
}

inline void read_mlp(const CheckpointData& d, const std::string& prefix, Mlp& mlp) {
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    d.fill(prefix + "." + std::to_string(i) + ".W", mlp.layers[i].W);
    d.fill(prefix + "." + std::to_string(i) + ".b", mlp.layers[i].b);
  }
}

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
  return s;
}

inline std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::istringstream is(s);
  std::size_t v;
  while (is >> v) out.push_back(v);
  return out;
}

}  // namespace detail

inline void write_ssm_config(std::ostream& os, const SsmConfig& cfg) {
  os << "cfg.latent_dim = " << cfg.latent_dim << '\n';
  os << "cfg.obs_dim = " << cfg.obs_dim << '\n';
  os << "cfg.context_len = " << cfg.context_len << '\n';
  os << "cfg.encoder_hidden = " << detail::join_sizes(cfg.encoder_hidden) << '\n';
  os << "cfg.decoder_hidden = " << detail::join_sizes(cfg.decoder_hidden) << '\n';
  os << "cfg.transition_hidden = " << cfg.transition_hidden << '\n';
  os << "cfg.transition_var = " << fmt_double(cfg.transition_var) << '\n';
  os << "cfg.obs_var = " << fmt_double(cfg.obs_var) << '\n';
  os << "cfg.learn_obs_var = " << (cfg.learn_obs_var ? 1 : 0) << '\n';
  os << "cfg.mc_samples = " << cfg.mc_samples << '\n';
}

inline SsmConfig read_ssm_config(const detail::CheckpointData& d) {
  SsmConfig cfg;
  cfg.latent_dim = std::stoul(d.key("cfg.latent_dim"));
  cfg.obs_dim = std::stoul(d.key("cfg.obs_dim"));
  cfg.context_len = std::stoul(d.key("cfg.context_len"));
  cfg.encoder_hidden = detail::parse_sizes(d.key("cfg.encoder_hidden"));
  cfg.decoder_hidden = detail::parse_sizes(d.key("cfg.decoder_hidden"));
  cfg.transition_hidden = std::stoul(d.key("cfg.transition_hidden"));
  cfg.transition_var = std::stod(d.key("cfg.transition_var"));
  cfg.obs_var = std::stod(d.key("cfg.obs_var"));
  cfg.learn_obs_var = d.key("cfg.learn_obs_var") == "1";
  cfg.mc_samples = std::stoi(d.key("cfg.mc_samples"));
  return cfg;
}

namespace detail {

inline void write_ssm_body(std::ostream& os, const SsmModel& m) {
  os << "deterministic = " << (m.qtheta.deterministic ? 1 : 0) << '\n';
  os << "mode_conditioned = " << (m.mode_conditioned ? 1 : 0) << '\n';
  os << "has_init_heads = " << (m.has_init_heads ? 1 : 0) << '\n';
  write_mlp(os, "encoder", m.encoder);
  if (m.has_init_heads) {
    write_tensor(os, "init_mu.W", m.init_mu.W);
    write_tensor(os, "init_mu.b", m.init_mu.b);
    write_tensor(os, "init_var.W", m.init_var.W);
    write_tensor(os, "init_var.b", m.init_var.b);
  }
  write_tensor(os, "qtheta.mu", m.qtheta.mu);
  write_tensor(os, "qtheta.logvar", m.qtheta.logvar);
  write_vector(os, "prior.mu", m.qtheta.prior_mu);
  write_vector(os, "prior.logvar", m.qtheta.prior_logvar);
  write_mlp(os, "decoder", m.decoder);
  write_tensor(os, "log_obs_var", m.log_obs_var);
}

inline SsmModel read_ssm_body(const CheckpointData& d) {
  SsmConfig cfg = read_ssm_config(d);
  Rng scratch(0);  // weights are overwritten below
  SsmModel m = SsmModel::make(cfg, scratch, d.key("mode_conditioned") == "1",
                              d.key("has_init_heads") == "1",
                              d.key("deterministic") == "1");
  read_mlp(d, "encoder", m.encoder);
  if (m.has_init_heads) {
    d.fill("init_mu.W", m.init_mu.W);
    d.fill("init_mu.b", m.init_mu.b);
    d.fill("init_var.W", m.init_var.W);
    d.fill("init_var.b", m.init_var.b);
  }
  d.fill("qtheta.mu", m.qtheta.mu);
  d.fill("qtheta.logvar", m.qtheta.logvar);
  m.qtheta.prior_mu = d.vec("prior.mu");
  m.qtheta.prior_logvar = d.vec("prior.logvar");
  read_mlp(d, "decoder", m.decoder);
  d.fill("log_obs_var", m.log_obs_var);
  return m;
}

}  // namespace detail

/// Checkpoint of a plain (or deterministic-transition) state-space model:
/// config echo, point weights, posterior and prior over theta, RNG state.
inline void save_checkpoint(std::ostream& os, const SsmModel& m,
                            const std::string& rng_state = "") {
  os << "cldyn-checkpoint v1\n";
  os << "kind = ssm\n";
  write_ssm_config(os, m.cfg);
  detail::write_ssm_body(os, m);
  if (!rng_state.empty()) os << "rng = " << rng_state << '\n';
}

/// CDDP checkpoint: extends the SSM block with the memory and the v-heads.
inline void save_checkpoint(std::ostream& os, const CddpModel& m,
                            const std::string& rng_state = "") {
  os << "cldyn-checkpoint v1\n";
  os << "kind = cddp\n";
  write_ssm_config(os, m.ssm.cfg);
  detail::write_ssm_body(os, m.ssm);
  os << "memory.R = " << m.memory.size() << '\n';
  os << "memory.alpha0 = " << fmt_double(m.memory.alpha0) << '\n';
  os << "memory.write_enabled = " << (m.memory.write_enabled ? 1 : 0) << '\n';
  os << "memory.trainable = " << (m.memory.slots.requires_grad() ? 1 : 0) << '\n';
  os << "train_slots = " << (m.train_slots ? 1 : 0) << '\n';
  detail::write_tensor(os, "memory.slots", m.memory.slots);
  detail::write_tensor(os, "v1.W", m.v1.W);
  detail::write_tensor(os, "v1.b", m.v1.b);
  detail::write_tensor(os, "v2.W", m.v2.W);
  detail::write_tensor(os, "v2.b", m.v2.b);
  if (!rng_state.empty()) os << "rng = " << rng_state << '\n';
}

inline std::string checkpoint_kind(const std::string& text) {
  std::istringstream is(text);
  auto d = detail::read_checkpoint_stream(is);
  return d.key("kind");
}

inline SsmModel load_ssm_checkpoint(std::istream& is, std::string* rng_state = nullptr) {
  auto d = detail::read_checkpoint_stream(is);
  if (d.key("kind") != "ssm") throw CheckpointError("checkpoint: expected kind ssm");
  if (rng_state && d.keys.count("rng")) *rng_state = d.key("rng");
  return detail::read_ssm_body(d);
}

inline CddpModel load_cddp_checkpoint(std::istream& is, std::string* rng_state = nullptr) {
  auto d = detail::read_checkpoint_stream(is);
  if (d.key("kind") != "cddp") throw CheckpointError("checkpoint: expected kind cddp");
  CddpModel m;
  m.ssm = detail::read_ssm_body(d);
  const std::size_t R = std::stoul(d.key("memory.R"));
  const std::size_t K = m.ssm.cfg.latent_dim;
  Rng scratch(0);
  m.memory = EpisodicMemory::make(R, K, std::stod(d.key("memory.alpha0")), scratch, 0.0,
                                  d.key("memory.trainable") == "1");
  d.fill("memory.slots", m.memory.slots);
  m.memory.write_enabled = d.key("memory.write_enabled") == "1";
  m.train_slots = d.key("train_slots") == "1";
  m.v1 = Dense::make(2 * K, K, scratch);
  m.v2 = Dense::make(2 * K, K, scratch);
  d.fill("v1.W", m.v1.W);
  d.fill("v1.b", m.v1.b);
  d.fill("v2.W", m.v2.W);
  d.fill("v2.b", m.v2.b);
  if (rng_state && d.keys.count("rng")) *rng_state = d.key("rng");
  return m;
}

template <typename ModelT>
inline std::string checkpoint_string(const ModelT& m, const std::string& rng_state = "") {
  std::ostringstream os;
  save_checkpoint(os, m, rng_state);
  return os.str();
}

/// FNV-1a over the serialized weights; used to assert evaluation purity.
inline std::uint64_t model_hash(const std::string& checkpoint_text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : checkpoint_text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace cldyn
