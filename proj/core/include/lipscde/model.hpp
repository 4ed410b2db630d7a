#pragma once

#include <memory>
#include <numbers>
#include <optional>
#include <string>

#include "lipscde/confounder.hpp"
#include "lipscde/latent_model.hpp"
#include "lipscde/outcome.hpp"
#include "lipscde/param.hpp"
#include "lipscde/unit.hpp"

namespace lipscde {

struct ModelConfig {
  std::size_t d = 5;
  std::size_t j = 3;
  std::size_t z_dim = 1;
  std::size_t latent_dim = 8;
  std::size_t brownian_dim = 4;
  double diffusion_scale = 0.05;
  double delta_stability = 0.01;
  bool learned_init = true;
  double max_step = 1.0 / 29.0;
  bool use_confounder_branch = true;  // false: the Conf. ablation (z == 0)
  std::size_t eval_samples = 10;
  std::size_t conv_channels = 4;
  std::size_t kernel_width = 5;
  std::size_t mlp_hidden = 8;
  double sigma_f = std::numbers::pi / 4.0;
  std::size_t causal_window = 16;
  uint64_t init_seed = 1;
};

/// The full estimator: confounder branch (optional), latent stochastic
/// controlled dynamics, and the IPTW outcome decoder, sharing one ParamStore.
class LipscdeModel {
 public:
  explicit LipscdeModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  LatentModel& latent() { return *latent_; }
  const LatentModel& latent() const { return *latent_; }
  OutcomeModel& outcome() { return *outcome_; }
  const OutcomeModel& outcome() const { return *outcome_; }
  ConfounderBranch* branch() { return branch_.get(); }
  const ConfounderBranch* branch() const { return branch_.get(); }

  /// Empirical per-channel treatment frequencies from the training split;
  /// the stabilized-weight numerator.
  void set_treatment_marginals(std::vector<double> marginal);
  const std::vector<double>& treatment_marginals() const { return marginal_; }

  PreparedUnit prepare(const ObservedUnit& obs) const;
  UnitForward forward_unit(Tape& tape, const PreparedUnit& prep,
                           uint64_t sample_seed) const;

  /// Latent path at observation times for one stochastic sample (the plain
  /// value-level view of forward_unit).
  LatentPath forward_unit_path(const UnitRecord& rec, uint64_t sample_seed) const;

  /// Mean final-time outcome prediction under a treatment plan, averaged over
  /// eval_samples stochastic latent draws (a single draw when the model is
  /// deterministic). Plans must be aligned to the unit's timestamps.
  double predict_final(const UnitRecord& rec, const Tensor& plan,
                       uint64_t eval_seed) const;

  /// One-step-ahead factual predictions at t_1..t_m (sample-averaged).
  std::vector<double> predict_factual(const UnitRecord& rec, uint64_t eval_seed) const;

  /// Counterfactual-minus-factual final outcome under the plan (shared
  /// stochastic sample seeds, so an identity plan gives exactly zero).
  double ite(const UnitRecord& rec, const Tensor& plan, uint64_t eval_seed) const;

  void save_checkpoint(const std::string& path) const;
  static LipscdeModel load_checkpoint(const std::string& path);

 private:
  std::size_t sample_count() const;

  ModelConfig cfg_;
  ParamStore store_;
  std::unique_ptr<ConfounderBranch> branch_;
  std::unique_ptr<LatentModel> latent_;
  std::unique_ptr<OutcomeModel> outcome_;
  std::vector<double> marginal_;
};

/// Conf. ablation: the identical pipeline with the confounder branch
/// disabled (z_t == 0 everywhere).
ModelConfig conf_model_config(ModelConfig cfg);

/// Mean ITE across units under each unit's stored plan of the given name.
double ate(const LipscdeModel& model, std::span<const UnitRecord* const> units,
           const std::string& plan_name, uint64_t eval_seed);

}  // namespace lipscde
