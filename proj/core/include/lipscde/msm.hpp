#pragma once

#include <span>
#include <vector>

#include "lipscde/tensor.hpp"
#include "lipscde/unit.hpp"

namespace lipscde {

/// Marginal structural model: logistic-regression propensities on
/// (xbar_t, a_{t-1}), stabilized clipped weights, and a weighted
/// least-squares outcome regression on (xbar_t, abar_t) solved in closed
/// form. Irregular records are first carried onto a regular grid by
/// last-observation-carried-forward.
struct MsmModel {
  Tensor prop_coef;               // [j x (2 + j)]
  Tensor out_coef;                // [3]: intercept, xbar, abar
  std::vector<double> marginal;   // empirical per-channel treatment frequency
  bool ridge_fallback = false;    // singular design hit the ridge path
  double max_step = 1.0 / 29.0;
  double clip_lo = 0.1;
  double clip_hi = 10.0;
};

MsmModel msm_fit(std::span<const UnitRecord* const> train, double max_step = 1.0 / 29.0);

/// Final-time outcome under a treatment plan aligned to the unit's
/// observation times.
double msm_predict(const MsmModel& model, const ObservedUnit& unit, const Tensor& plan);

/// One-step-ahead factual predictions at observation times t_1..t_m.
std::vector<double> msm_predict_factual(const MsmModel& model, const ObservedUnit& unit);

/// Stabilized weights on the unit's regular grid (diagnostic / tests).
std::vector<double> msm_weights(const MsmModel& model, const ObservedUnit& unit);

/// Weighted least squares via normal equations; falls back to a small ridge
/// (lambda = 1e-6) when the design is singular, reporting it through
/// *ridge_used. Exposed for tests.
Tensor solve_weighted_least_squares(const std::vector<std::vector<double>>& rows,
                                    std::span<const double> targets,
                                    std::span<const double> weights, bool* ridge_used);

}  // namespace lipscde
