#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lipscde/errors.hpp"
#include "lipscde/model.hpp"
#include "lipscde/outcome.hpp"
#include "lipscde/simulator.hpp"
#include "test_util.hpp"

using namespace lipscde;
namespace tt = lipscde::testing;

namespace {

SimConfig micro_sim() {
  SimConfig cfg;
  cfg.n_units = 4;
  cfg.t_steps = 6;
  cfg.d = 3;
  cfg.j = 2;
  cfg.gamma = 0.2;
  cfg.seed = 77;
  return cfg;
}

ModelConfig micro_model() {
  ModelConfig cfg;
  cfg.d = 3;
  cfg.j = 2;
  cfg.z_dim = 1;
  cfg.latent_dim = 4;
  cfg.brownian_dim = 2;
  cfg.diffusion_scale = 0.05;
  cfg.conv_channels = 2;
  cfg.mlp_hidden = 4;
  cfg.causal_window = 6;
  cfg.max_step = 1.0 / 5.0;
  cfg.init_seed = 23;
  return cfg;
}

}  // namespace

TEST_CASE("propensity: conditional equal to marginal gives unit raw weights") {
  std::size_t k = 5, j = 2;
  std::vector<double> marginal{0.3, 0.8};
  Tensor a(k, j);
  for (std::size_t s = 0; s < k; ++s) {
    a(s, 0) = s % 2 == 0 ? 1.0 : 0.0;
    a(s, 1) = 1.0;
  }
  std::vector<Tensor> logits;
  for (std::size_t s = 0; s + 1 < k; ++s) {
    Tensor l(j);
    for (std::size_t c = 0; c < j; ++c)
      l[c] = std::log(marginal[c] / (1.0 - marginal[c]));
    logits.push_back(l);
  }
  PropensityRecord rec = propensity(logits, a, marginal);
  for (double w : rec.raw_weights) CHECK(w == doctest::Approx(1.0).epsilon(1e-12));
  for (double w : rec.stabilized_weights) CHECK(w == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("propensity: floored probabilities under a rare treatment clip at 10") {
  std::size_t k = 4, j = 1;
  std::vector<double> marginal{0.5};
  Tensor a(k, j);
  for (std::size_t s = 0; s < k; ++s) a(s, 0) = 1.0;
  std::vector<Tensor> logits;
  for (std::size_t s = 0; s + 1 < k; ++s) {
    Tensor l(j);
    l[0] = -80.0;  // conditional probability floored at 1e-6
    logits.push_back(l);
  }
  PropensityRecord rec = propensity(logits, a, marginal);
  CHECK(rec.probs(1, 0) == doctest::Approx(1e-6));
  CHECK(rec.raw_weights.back() > 10.0);
  CHECK(rec.stabilized_weights.back() == 10.0);
}

TEST_CASE("propensity matches a product-of-ratios oracle before clipping") {
  std::size_t k = 6, j = 2;
  std::vector<double> marginal{0.4, 0.6};
  Tensor a(k, j);
  std::vector<Tensor> logits;
  for (std::size_t s = 0; s < k; ++s)
    for (std::size_t c = 0; c < j; ++c)
      a(s, c) = rng_uniform(500, Stream::kTest, s, c) < 0.5 ? 0.0 : 1.0;
  for (std::size_t s = 0; s + 1 < k; ++s) {
    Tensor l(j);
    for (std::size_t c = 0; c < j; ++c)
      l[c] = 2.0 * rng_normal(501, Stream::kTest, s, c);
    logits.push_back(l);
  }
  PropensityRecord rec = propensity(logits, a, marginal);
  double running = 1.0;
  for (std::size_t s = 0; s < k; ++s) {
    for (std::size_t c = 0; c < j; ++c) {
      double cond, marg;
      if (s == 0) {
        cond = marg = std::clamp(a(0, c) != 0.0 ? marginal[c] : 1.0 - marginal[c],
                                 1e-6, 1.0 - 1e-6);
      } else {
        double p = 1.0 / (1.0 + std::exp(-logits[s - 1][c]));
        cond = std::clamp(a(s, c) != 0.0 ? p : 1.0 - p, 1e-6, 1.0 - 1e-6);
        marg = std::clamp(a(s, c) != 0.0 ? marginal[c] : 1.0 - marginal[c], 1e-6,
                          1.0 - 1e-6);
      }
      running *= marg / cond;
    }
    CHECK(rec.raw_weights[s] == doctest::Approx(running).epsilon(1e-12));
  }
}

TEST_CASE("propensity: empty path is a contract violation") {
  Tensor a(std::size_t(0), std::size_t(1));
  std::vector<Tensor> logits;
  std::vector<double> marginal{0.5};
  CHECK_THROWS_AS(propensity(logits, a, marginal), ContractViolation);
}

TEST_CASE("outcome_loss basics and oracle") {
  std::vector<double> preds{1.0, 2.0, 3.0};
  std::vector<double> same{1.0, 2.0, 3.0};
  std::vector<double> ones{1.0, 1.0, 1.0};
  CHECK(outcome_loss(preds, same, ones) == 0.0);

  std::vector<double> targets{0.5, 2.5, 2.0};
  double plain = outcome_loss(preds, targets, ones);
  double mse = ((0.5 * 0.5) + (0.5 * 0.5) + 1.0) / 3.0;
  CHECK(plain == doctest::Approx(mse).epsilon(1e-12));

  std::vector<double> w{0.2, 1.7, 0.6};
  double got = outcome_loss(preds, targets, w);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    double d = preds[i] - targets[i];
    num += w[i] * d * d;
    den += w[i];
  }
  CHECK(got == doctest::Approx(num / den).epsilon(1e-12));

  // invariance to uniform weight rescaling
  std::vector<double> w5{1.0, 8.5, 3.0};
  std::vector<double> w5s{2.0, 17.0, 6.0};
  CHECK(outcome_loss(preds, targets, w5) ==
        doctest::Approx(outcome_loss(preds, targets, w5s)).epsilon(1e-12));

  std::vector<double> zero{0.0, 0.0, 0.0};
  CHECK_THROWS_AS(outcome_loss(preds, targets, zero), ContractViolation);
}

TEST_CASE("decode: two observations give exactly one prediction") {
  ParamStore store;
  OutcomeConfig cfg;
  cfg.latent_dim = 3;
  cfg.j = 2;
  cfg.hidden = 3;
  OutcomeModel om(store, cfg, 3);
  Tape tape;
  std::vector<Var> latents{tape.constant(tt::random_vector(3, 1)),
                           tape.constant(tt::random_vector(3, 2))};
  Tensor plan(std::size_t(2), std::size_t(2));
  std::vector<double> dt{0.0, 0.5};
  std::vector<Var> preds = om.decode(tape, latents, plan, dt);
  CHECK(preds.size() == 1);
  CHECK(preds[0].value().size() == 1);

  Tensor bad_plan(std::size_t(3), std::size_t(2));
  CHECK_THROWS_AS(om.decode(tape, latents, bad_plan, dt), ContractViolation);
}

TEST_CASE("decode: zero parameters give constant zero predictions") {
  ParamStore store;
  OutcomeConfig cfg;
  cfg.latent_dim = 3;
  cfg.j = 1;
  cfg.hidden = 4;
  OutcomeModel om(store, cfg, 4);
  for (Param& p : store) p.value.fill(0.0);
  Tape tape;
  std::vector<Var> latents;
  for (int i = 0; i < 5; ++i)
    latents.push_back(tape.constant(tt::random_vector(3, uint64_t(10 + i))));
  Tensor plan(std::size_t(5), std::size_t(1));
  std::vector<double> dt{0.0, 0.1, 0.3, 0.1, 0.2};
  for (Var p : om.decode(tape, latents, plan, dt))
    CHECK(p.value().scalar_value() == 0.0);
}

TEST_CASE("decode gradients match finite differences") {
  ParamStore store;
  OutcomeConfig cfg;
  cfg.latent_dim = 3;
  cfg.j = 2;
  cfg.hidden = 3;
  OutcomeModel om(store, cfg, 5);
  Tensor plan(std::size_t(4), std::size_t(2));
  plan(1, 0) = 1.0;
  plan(2, 1) = 1.0;
  std::vector<double> dt{0.0, 0.2, 0.4, 0.1};
  std::vector<Tensor> lat;
  for (int i = 0; i < 4; ++i) lat.push_back(tt::random_vector(3, uint64_t(40 + i)));

  auto build = [&](Tape& t) {
    std::vector<Var> latents;
    for (const Tensor& l : lat) latents.push_back(t.constant(l));
    std::vector<Var> preds = om.decode(t, latents, plan, dt);
    std::vector<double> targets{0.3, -0.2, 0.9};
    std::vector<double> weights{1.0, 0.5, 2.0};
    return t.weighted_sq_err_mean(preds, targets, weights);
  };
  store.zero_grad();
  {
    Tape t;
    t.backward(build(t));
  }
  auto eval = [&]() {
    Tape t;
    return build(t).value().scalar_value();
  };
  CHECK(tt::max_grad_rel_error(store, eval) < 1e-3);
}

TEST_CASE("prediction at t_k ignores later treatments and covariates") {
  SimConfig sc = micro_sim();
  UnitRecord rec = simulate_unit(sc, 321);
  ModelConfig mc = micro_model();
  mc.diffusion_scale = 0.0;
  LipscdeModel model(mc);

  auto preds_for = [&](const UnitRecord& r) {
    Tape tape;
    PreparedUnit prep = model.prepare(r.observed());
    UnitForward fwd = model.forward_unit(tape, prep, 0);
    std::vector<Var> preds = model.outcome().decode(tape, fwd.obs_states, r.a, prep.dt_obs);
    std::vector<double> out;
    for (Var p : preds) out.push_back(p.value().scalar_value());
    return out;
  };
  std::vector<double> base = preds_for(rec);

  std::size_t k = 2;
  UnitRecord mut = rec;
  for (std::size_t s = k + 1; s < mut.length(); ++s) {
    for (std::size_t c = 0; c < sc.j; ++c) mut.a(s, c) = 1.0 - mut.a(s, c);
    for (std::size_t c = 0; c < sc.d; ++c) mut.x(s, c) -= 3.0;
  }
  std::vector<double> mutated = preds_for(mut);
  // pred index s targets t_{s+1} and consumes inputs up to t_s
  for (std::size_t s = 0; s <= k; ++s) CHECK(base[s] == mutated[s]);
}

TEST_CASE("identity plan reproduces the factual prediction exactly") {
  SimConfig sc = micro_sim();
  UnitRecord rec = simulate_unit(sc, 322);
  ModelConfig mc = micro_model();
  mc.diffusion_scale = 0.3;  // stochastic: shared seeds must still match
  LipscdeModel model(mc);
  double cf = model.predict_final(rec, rec.a, 9);
  std::vector<double> fact = model.predict_factual(rec, 9);
  CHECK(cf == fact.back());
  CHECK(model.ite(rec, rec.a, 9) == 0.0);
}

TEST_CASE("deterministic mode: sample count does not change the output") {
  SimConfig sc = micro_sim();
  UnitRecord rec = simulate_unit(sc, 323);
  ModelConfig mc = micro_model();
  mc.diffusion_scale = 0.0;
  mc.eval_samples = 1;
  LipscdeModel m1(mc);
  mc.eval_samples = 10;
  LipscdeModel m10(mc);
  const CfPlan* plan = rec.plan(kPlanFlipFinal);
  REQUIRE(plan != nullptr);
  CHECK(m1.predict_final(rec, plan->treatments, 4) ==
        m10.predict_final(rec, plan->treatments, 4));
}

TEST_CASE("ite antisymmetry between two counterfactual plans") {
  SimConfig sc = micro_sim();
  UnitRecord rec = simulate_unit(sc, 324);
  ModelConfig mc = micro_model();
  LipscdeModel model(mc);
  const Tensor& plan_a = rec.plan(kPlanFlipFinal)->treatments;
  const Tensor& plan_b = rec.plan(kPlanNeverTreat)->treatments;
  double ab = model.predict_final(rec, plan_a, 11) - model.predict_final(rec, plan_b, 11);
  double ba = model.predict_final(rec, plan_b, 11) - model.predict_final(rec, plan_a, 11);
  CHECK(ab == -ba);
}

TEST_CASE("ate is the mean of per-unit ites") {
  SimConfig sc = micro_sim();
  ModelConfig mc = micro_model();
  LipscdeModel model(mc);
  UnitRecord r1 = simulate_unit(sc, 325);
  UnitRecord r2 = simulate_unit(sc, 326);
  r1.unit_id = 0;
  r2.unit_id = 1;
  std::vector<const UnitRecord*> units{&r1, &r2};
  double i1 = model.ite(r1, r1.plan(kPlanFlipFinal)->treatments, 5);
  double i2 = model.ite(r2, r2.plan(kPlanFlipFinal)->treatments, 5);
  double got = ate(model, units, kPlanFlipFinal, 5);
  CHECK(got == doctest::Approx(0.5 * (i1 + i2)).epsilon(1e-15));

  std::vector<const UnitRecord*> empty;
  CHECK_THROWS_AS(ate(model, empty, kPlanFlipFinal, 5), ContractViolation);
}
