#pragma once

#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "cldyn/metrics/metrics.hpp"
#include "cldyn/model/cddp.hpp"
#include "cldyn/model/checkpoint.hpp"
#include "cldyn/model/ssm.hpp"

namespace cldyn {

enum class MemoryMode { None, Learned, Zeros, Ones, Twos };

inline const char* memory_mode_name(MemoryMode m) {
  switch (m) {
    case MemoryMode::None: return "none";
    case MemoryMode::Learned: return "learned";
    case MemoryMode::Zeros: return "zeros";
    case MemoryMode::Ones: return "ones";
    case MemoryMode::Twos: return "twos";
  }
  return "?";
}

/// One row of the ablation grid: who transfers parameters, whether the
/// transition weights carry a posterior, and what the memory holds.
struct VariantSpec {
  bool parameter_transfer = false;
  bool probabilistic_params = true;
  MemoryMode memory_mode = MemoryMode::None;
};

inline VariantSpec variant_from_name(const std::string& name) {
  if (name == "rnn") return {true, false, MemoryMode::None};
  if (name == "vcl-bssm") return {true, true, MemoryMode::None};
  if (name == "cddp-zeros") return {false, true, MemoryMode::Zeros};
  if (name == "cddp-ones") return {false, true, MemoryMode::Ones};
  if (name == "cddp-twos") return {false, true, MemoryMode::Twos};
  if (name == "cddp-transfer") return {true, true, MemoryMode::Learned};
  if (name == "cddp") return {false, true, MemoryMode::Learned};
  throw std::invalid_argument("unknown variant: " + name);
}

inline std::vector<std::string> ablation_variant_names() {
  return {"rnn", "vcl-bssm", "cddp-zeros", "cddp-ones", "cddp-twos", "cddp-transfer", "cddp"};
}

struct ModelConfig {
  SsmConfig ssm;
  std::size_t memory_size = 20;
  double alpha0 = 1.0;
  double slot_init_std = 0.1;
};

/// Either a plain/deterministic SSM or a CDDP, with uniform access to the
/// pieces the training loop needs.
struct AnyModel {
  std::variant<SsmModel, CddpModel> model;
  VariantSpec spec;

  bool is_cddp() const { return std::holds_alternative<CddpModel>(model); }
  CddpModel& cddp() { return std::get<CddpModel>(model); }
  const CddpModel& cddp() const { return std::get<CddpModel>(model); }

  SsmModel& ssm_inner() {
    return is_cddp() ? std::get<CddpModel>(model).ssm : std::get<SsmModel>(model);
  }
  const SsmModel& ssm_inner() const {
    return is_cddp() ? std::get<CddpModel>(model).ssm : std::get<SsmModel>(model);
  }

  std::vector<Tensor> parameters() const {
    return is_cddp() ? std::get<CddpModel>(model).parameters()
                     : std::get<SsmModel>(model).parameters();
  }

  std::string checkpoint(const std::string& rng_state = "") const {
    return is_cddp() ? checkpoint_string(std::get<CddpModel>(model), rng_state)
                     : checkpoint_string(std::get<SsmModel>(model), rng_state);
  }

  std::uint64_t hash() const { return model_hash(checkpoint()); }
};

inline ElboResult model_elbo(const AnyModel& m, const Sequence& seq, Rng& rng) {
  return m.is_cddp() ? cddp_elbo(m.cddp(), seq, rng) : bssm_elbo(m.ssm_inner(), seq, rng);
}

inline PredictFn predictor(const AnyModel& m, std::size_t n_samples) {
  if (m.is_cddp()) {
    const CddpModel* c = &m.cddp();
    return [c, n_samples](const Matrix& ctx, std::size_t horizon, Rng& rng) {
      return posterior_predictive(*c, ctx, horizon, n_samples, rng);
    };
  }
  const SsmModel* s = &m.ssm_inner();
  return [s, n_samples](const Matrix& ctx, std::size_t horizon, Rng& rng) {
    return predict(*s, ctx, horizon, n_samples, rng);
  };
}

/// Builds a model variant from the ablation grid. Constant-memory variants
/// get frozen slots that neither the write rule nor the optimizer touches.
inline AnyModel make_variant(const VariantSpec& spec, const ModelConfig& cfg, Rng& rng) {
  AnyModel out;
  out.spec = spec;
  if (spec.memory_mode == MemoryMode::None) {
    out.model = SsmModel::make(cfg.ssm, rng, /*mode_conditioned=*/false,
                               /*with_init_heads=*/true,
                               /*deterministic=*/!spec.probabilistic_params);
    return out;
  }
  if (!spec.probabilistic_params)
    throw std::invalid_argument("make_variant: memory variants require probabilistic params");
  CddpConfig ccfg{cfg.ssm, cfg.memory_size, cfg.alpha0, cfg.slot_init_std};
  CddpModel model = CddpModel::make(ccfg, rng);
  switch (spec.memory_mode) {
    case MemoryMode::Learned:
      break;
    case MemoryMode::Zeros:
    case MemoryMode::Ones:
    case MemoryMode::Twos: {
      const double fill = spec.memory_mode == MemoryMode::Zeros   ? 0.0
                          : spec.memory_mode == MemoryMode::Ones ? 1.0
                                                                 : 2.0;
      model.memory =
          EpisodicMemory::constant(cfg.memory_size, cfg.ssm.latent_dim, fill, cfg.alpha0);
      model.train_slots = false;
      break;
    }
    default:
      throw std::invalid_argument("make_variant: invalid memory mode");
  }
  out.model = std::move(model);
  return out;
}

}  // namespace cldyn
