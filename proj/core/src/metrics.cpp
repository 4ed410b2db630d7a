#include "lipscde/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "lipscde/errors.hpp"
#include "lipscde/simulator.hpp"

namespace lipscde {

double rmse_percent(std::span<const double> preds, std::span<const double> targets,
                    double normalizer) {
  if (preds.size() != targets.size() || preds.empty())
    throw ContractViolation("rmse_percent: aligned non-empty inputs required");
  if (normalizer == 0.0) throw ContractViolation("rmse_percent: zero normalizer");
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    double d = preds[i] - targets[i];
    s += d * d;
  }
  return 100.0 * std::sqrt(s / double(preds.size())) / normalizer;
}

namespace {

double range(std::span<const double> v) {
  auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *hi - *lo;
}

struct Pooled {
  std::vector<double> factual_pred, factual_true;
  std::vector<double> cf_pred, cf_true;
  std::vector<double> ite_pred, ite_true;

  MetricsReport report() const {
    MetricsReport rep;
    rep.rmse_pct_factual = rmse_percent(factual_pred, factual_true, range(factual_true));
    rep.rmse_pct_counterfactual = rmse_percent(cf_pred, cf_true, range(cf_true));
    double mp = 0.0, mt = 0.0;
    for (std::size_t i = 0; i < ite_pred.size(); ++i) {
      mp += ite_pred[i];
      mt += ite_true[i];
    }
    rep.ate_error = std::abs(mp - mt) / double(ite_pred.size());
    return rep;
  }
};

}  // namespace

MetricsReport evaluate_model(const LipscdeModel& model,
                             std::span<const UnitRecord* const> test_units,
                             uint64_t eval_seed) {
  if (test_units.empty()) throw ContractViolation("evaluate_model: empty test set");
  Pooled pool;
  for (const UnitRecord* u : test_units) {
    std::vector<double> fp = model.predict_factual(*u, eval_seed);
    for (std::size_t k = 0; k < fp.size(); ++k) {
      pool.factual_pred.push_back(fp[k]);
      pool.factual_true.push_back(u->y[k + 1]);
    }
    const CfPlan* plan = u->plan(kPlanFlipFinal);
    if (plan == nullptr) throw ContractViolation("evaluate_model: missing flip_final plan");
    double cf = model.predict_final(*u, plan->treatments, eval_seed);
    pool.cf_pred.push_back(cf);
    pool.cf_true.push_back(plan->y_cf[plan->y_cf.size() - 1]);
    pool.ite_pred.push_back(model.ite(*u, plan->treatments, eval_seed));
    pool.ite_true.push_back(plan->y_cf[plan->y_cf.size() - 1] - u->y[u->length() - 1]);
  }
  MetricsReport rep = pool.report();
  rep.seed = eval_seed;
  return rep;
}

MetricsReport evaluate_msm(const MsmModel& model,
                           std::span<const UnitRecord* const> test_units) {
  if (test_units.empty()) throw ContractViolation("evaluate_msm: empty test set");
  Pooled pool;
  for (const UnitRecord* u : test_units) {
    ObservedUnit obs = u->observed();
    std::vector<double> fp = msm_predict_factual(model, obs);
    for (std::size_t k = 0; k < fp.size(); ++k) {
      pool.factual_pred.push_back(fp[k]);
      pool.factual_true.push_back(u->y[k + 1]);
    }
    const CfPlan* plan = u->plan(kPlanFlipFinal);
    if (plan == nullptr) throw ContractViolation("evaluate_msm: missing flip_final plan");
    double cf = msm_predict(model, obs, plan->treatments);
    double fa = msm_predict(model, obs, *obs.a);
    pool.cf_pred.push_back(cf);
    pool.cf_true.push_back(plan->y_cf[plan->y_cf.size() - 1]);
    pool.ite_pred.push_back(cf - fa);
    pool.ite_true.push_back(plan->y_cf[plan->y_cf.size() - 1] - u->y[u->length() - 1]);
  }
  return pool.report();
}

}  // namespace lipscde
