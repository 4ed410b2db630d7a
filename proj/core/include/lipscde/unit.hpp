#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lipscde/tensor.hpp"

namespace lipscde {

/// A counterfactual treatment plan stored with a simulated unit, together
/// with the ground-truth outcome trajectory under that plan.
struct CfPlan {
  std::string name;
  Tensor treatments;  // [m x j], aligned to the unit's timestamps
  Tensor y_cf;        // [m], ground-truth outcomes under the plan
};

/// Model-facing view of one unit: everything an estimator may legally see.
/// Ground-truth confounders and counterfactuals are deliberately absent.
struct ObservedUnit {
  int64_t unit_id = 0;
  const std::vector<double>* timestamps = nullptr;
  const Tensor* x = nullptr;  // [m x d]
  const Tensor* a = nullptr;  // [m x j]
  const Tensor* y = nullptr;  // [m]

  std::size_t length() const { return timestamps->size(); }
  std::size_t covariate_dim() const { return x->cols(); }
  std::size_t treatment_dim() const { return a->cols(); }
};

/// One patient's (possibly irregular) trajectory with simulator ground truth.
struct UnitRecord {
  int64_t unit_id = 0;
  uint64_t unit_seed = 0;
  std::vector<double> timestamps;
  Tensor x;       // [m x d]
  Tensor a;       // [m x j], binary
  Tensor y;       // [m]
  Tensor z_true;  // [m x 1], hidden from models
  std::vector<CfPlan> cf_plans;

  std::size_t length() const { return timestamps.size(); }

  /// The only accessor models are allowed to use.
  ObservedUnit observed() const {
    return ObservedUnit{unit_id, &timestamps, &x, &a, &y};
  }

  const CfPlan* plan(const std::string& name) const {
    for (const CfPlan& p : cf_plans)
      if (p.name == name) return &p;
    return nullptr;
  }
};

}  // namespace lipscde
