#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lipscde/unit.hpp"

namespace lipscde {

inline constexpr const char* kDatasetFormat = "lipscde-ds/1";
inline constexpr const char* kPlanFlipFinal = "flip_final";
inline constexpr const char* kPlanNeverTreat = "never_treat";

/// Confounded longitudinal simulator. One hidden AR(1) process z drives both
/// covariates and (through gamma) treatment assignment and outcomes:
///   z_{t+1} = alpha_z z_t + sigma_z eps
///   x_{t+1} = alpha_x x_t + c_z z_t 1 + sigma_x eps
///   P(a_{t,c} = 1) = sigmoid(lambda (gamma w_z z_t + (1-gamma) w_x xbar_t))
///   y_{t+1} = beta_a abar_t + beta_x xbar_t + gamma_y z_t + sigma_y eps
/// gamma in [0,1] interpolates treatment dependence between observed
/// covariates and the hidden process. Timestamps live on [0,1].
struct SimConfig {
  std::size_t n_units = 1000;
  std::size_t t_steps = 30;
  std::size_t d = 5;
  std::size_t j = 3;
  double gamma = 0.0;
  double missing_rate = 0.0;
  double sigma_z = 0.25;
  double sigma_x = 0.35;
  double sigma_y = 0.15;
  double alpha_z = 0.92;
  double alpha_x = 0.45;
  double beta_a = 1.0;
  double beta_x = 0.5;
  double gamma_y = 1.2;
  double w_z = 1.0;
  double w_x = 1.0;
  double c_z = 0.6;
  double init_scale = 0.7;
  uint64_t seed = 0;

  double timestamp(std::size_t k) const {
    return double(k) / double(t_steps - 1);
  }
};

/// Sharpness constant lambda of the treatment-assignment sigmoid.
inline constexpr double kTreatSharpness = 5.0;

/// Validates SimConfig ranges; throws ContractViolation.
void validate(const SimConfig& cfg);

/// Fully aligned unit on the canonical grid (no missingness yet), with the
/// two standard counterfactual plans attached. Deterministic in
/// (cfg, unit_seed).
UnitRecord simulate_unit(const SimConfig& cfg, uint64_t unit_seed);

/// Ground-truth outcome trajectory under an arbitrary full-grid treatment
/// plan, using the identical noise realization as the factual record.
/// Treatments enter outcomes only through beta_a * abar, so the
/// counterfactual is the factual trajectory shifted by the treatment delta.
Tensor counterfactual_outcomes(const SimConfig& cfg, const Tensor& factual_a,
                               const Tensor& factual_y, const Tensor& plan_a);

/// Removes floor(rate * m) interior observation points (first and last always
/// kept), re-deriving the stored counterfactual plans on the retained
/// timeline. Throws if fewer than 4 observations would remain.
UnitRecord apply_missingness(const SimConfig& cfg, const UnitRecord& full, double rate,
                             uint64_t seed);

struct Manifest {
  std::string format = kDatasetFormat;
  SimConfig config;
  std::vector<int64_t> train_ids;
  std::vector<int64_t> val_ids;
  std::vector<int64_t> test_ids;
};

struct Dataset {
  std::vector<UnitRecord> units;
  Manifest manifest;

  std::vector<const UnitRecord*> split(const std::vector<int64_t>& ids) const;
};

/// n_units records with an 80/10/10 split recorded in the manifest; fully
/// seed-deterministic.
Dataset generate_dataset(const SimConfig& cfg);

}  // namespace lipscde
