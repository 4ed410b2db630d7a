#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lipscde/model.hpp"
#include "lipscde/msm.hpp"
#include "lipscde/unit.hpp"

namespace lipscde {

/// 100 * sqrt(mean((pred - target)^2)) / normalizer. The normalizer is the
/// max-min range of the targets over the evaluation split.
double rmse_percent(std::span<const double> preds, std::span<const double> targets,
                    double normalizer);

struct MetricsReport {
  double rmse_pct_factual = 0.0;
  double rmse_pct_counterfactual = 0.0;
  double ate_error = 0.0;
  double runtime_seconds = 0.0;
  uint64_t seed = 0;
};

/// Factual one-step-ahead RMSE(%), counterfactual final-outcome RMSE(%)
/// under each unit's flip_final plan, and the absolute ATE error.
MetricsReport evaluate_model(const LipscdeModel& model,
                             std::span<const UnitRecord* const> test_units,
                             uint64_t eval_seed);

MetricsReport evaluate_msm(const MsmModel& model,
                           std::span<const UnitRecord* const> test_units);

}  // namespace lipscde
