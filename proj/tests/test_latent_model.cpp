#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lipscde/adam.hpp"
#include "lipscde/errors.hpp"
#include "lipscde/latent_model.hpp"
#include "lipscde/model.hpp"
#include "lipscde/simulator.hpp"
#include "svd_oracle.hpp"
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
  cfg.gamma = 0.3;
  cfg.seed = 41;
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
  cfg.init_seed = 17;
  return cfg;
}

Param& find_param(ParamStore& store, const char* name) {
  for (Param& p : store)
    if (p.name == name) return p;
  throw std::runtime_error(std::string("no param ") + name);
}

}  // namespace

TEST_CASE("embed: zero inputs with zero bias give the zero vector") {
  ParamStore store;
  LatentConfig cfg;
  cfg.d = 3;
  cfg.j = 2;
  cfg.z_dim = 1;
  cfg.latent_dim = 4;
  LatentModel lm(store, cfg, 2);
  // bias starts at zero by construction
  Tape tape;
  std::vector<double> x{0, 0, 0}, a{0, 0};
  Var z = tape.constant(Tensor(std::size_t(1)));
  Var e = lm.embed(tape, x, a, z);
  CHECK(e.value().size() == 4);
  for (double v : e.value().values()) CHECK(v == 0.0);

  std::vector<double> bad{0, 0};
  CHECK_THROWS_AS(lm.embed(tape, bad, a, z), ContractViolation);
}

TEST_CASE("embed gradient passes finite differences") {
  ParamStore store;
  LatentConfig cfg;
  cfg.d = 2;
  cfg.j = 2;
  cfg.z_dim = 2;
  cfg.latent_dim = 3;
  LatentModel lm(store, cfg, 3);
  std::vector<double> x{0.4, -0.2}, a{1.0, 0.0};
  Tensor zval = tt::random_vector(2, 5);

  auto build = [&](Tape& t) {
    Var z = t.constant(zval);
    Var e = lm.embed(t, x, a, z);
    return t.sum(e);
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
  CHECK(tt::max_grad_rel_error(store, eval) < 1e-4);
}

TEST_CASE("drift field: zero state, zero embed, zero bias give the zero field") {
  ParamStore store;
  LatentConfig cfg;
  cfg.d = 2;
  cfg.j = 1;
  cfg.z_dim = 1;
  cfg.latent_dim = 3;
  LatentModel lm(store, cfg, 4);
  Tape tape;
  Var u = tape.constant(Tensor(std::size_t(3)));
  Var e = tape.constant(Tensor(std::size_t(3)));
  Var f = lm.drift_field(tape, u, e);
  CHECK(f.value().rows() == 3);
  CHECK(f.value().cols() == cfg.control_channels());
  for (double v : f.value().values()) CHECK(v == 0.0);
}

TEST_CASE("drift field: constant bias propagates as tanh(c) rows") {
  ParamStore store;
  LatentConfig cfg;
  cfg.d = 1;
  cfg.j = 1;
  cfg.z_dim = 1;
  cfg.latent_dim = 2;
  LatentModel lm(store, cfg, 5);
  // zero every matrix, set bias to c and channel weights to ones
  lm.drift_m().value.fill(0.0);
  lm.drift_w().value.fill(0.0);
  lm.drift_u().value.fill(0.0);
  find_param(store, "latent.drift.b").value.fill(0.7);
  find_param(store, "latent.drift.chan").value.fill(1.0);

  Tape tape;
  Var u = tape.constant(Tensor(std::size_t(2)));
  Var e = tape.constant(Tensor(std::size_t(2)));
  Var f = lm.drift_field(tape, u, e);
  for (double v : f.value().values())
    CHECK(v == doctest::Approx(std::tanh(0.7)).epsilon(1e-12));
}

TEST_CASE("cell output is (|A| + 1)-Lipschitz in the state") {
  ParamStore store;
  LatentConfig cfg;
  cfg.d = 2;
  cfg.j = 2;
  cfg.z_dim = 1;
  cfg.latent_dim = 5;
  LatentModel lm(store, cfg, 6);
  store.apply_projections();  // ensure |W| <= 1

  // materialize A = M - M^T - delta I and bound its norm with the SVD oracle
  Tape t0;
  Var a_var = t0.skew_shift(t0.param(lm.drift_m()), cfg.delta_stability);
  double a_norm = tt::spectral_norm_oracle(a_var.value());

  Tensor e = tt::random_vector(5, 70);
  auto cell_value = [&](const Tensor& u) {
    Tape t;
    Var v = t.lip_cell(t.param(lm.drift_m()), t.param(lm.drift_w()),
                       t.param(lm.drift_u()), t.param(find_param(store, "latent.drift.b")),
                       t.constant(u), t.constant(e), cfg.delta_stability);
    return v.value();
  };
  for (uint64_t trial = 0; trial < 100; ++trial) {
    Tensor u1 = tt::random_vector(5, 7000 + trial);
    Tensor u2 = tt::random_vector(5, 8000 + trial);
    Tensor v1 = cell_value(u1), v2 = cell_value(u2);
    double dv = 0.0, du = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      dv += (v1[i] - v2[i]) * (v1[i] - v2[i]);
      du += (u1[i] - u2[i]) * (u1[i] - u2[i]);
    }
    CHECK(std::sqrt(dv) <= (a_norm + 1.0) * std::sqrt(du) * (1.0 + 1e-9));
  }
}

TEST_CASE("stability reparameterization: symmetric part of A is exactly -delta I") {
  ParamStore store;
  LatentConfig cfg;
  cfg.latent_dim = 4;
  LatentModel lm(store, cfg, 8);
  Tape t;
  Var a = t.skew_shift(t.param(lm.drift_m()), cfg.delta_stability);
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 4; ++k) {
      double sym = 0.5 * (av(i, k) + av(k, i));
      CHECK(sym == doctest::Approx(i == k ? -cfg.delta_stability : 0.0).epsilon(1e-15));
    }
}

TEST_CASE("diffusion field: scale zero kills it, doubling scale doubles it") {
  ParamStore store;
  LatentConfig cfg;
  cfg.d = 2;
  cfg.j = 1;
  cfg.z_dim = 1;
  cfg.latent_dim = 3;
  cfg.diffusion_scale = 0.0;
  LatentModel lm0(store, cfg, 9);
  Tape tape;
  Var u = tape.constant(tt::random_vector(3, 71));
  Var e = tape.constant(tt::random_vector(3, 72));
  Var g0 = lm0.diffusion_field(tape, u, e);
  for (double v : g0.value().values()) CHECK(v == 0.0);

  ParamStore s1, s2;
  cfg.diffusion_scale = 0.3;
  LatentModel lm1(s1, cfg, 9);
  cfg.diffusion_scale = 0.6;
  LatentModel lm2(s2, cfg, 9);  // same init seed: identical underlying params
  Tape t1, t2;
  Var g1 = lm1.diffusion_field(t1, t1.constant(u.value()), t1.constant(e.value()));
  Var g2 = lm2.diffusion_field(t2, t2.constant(u.value()), t2.constant(e.value()));
  for (std::size_t i = 0; i < g1.value().size(); ++i)
    CHECK(g2.value()[i] == doctest::Approx(2.0 * g1.value()[i]).epsilon(1e-12));
}

TEST_CASE("forward_unit: deterministic when diffusion_scale is zero") {
  SimConfig sc = micro_sim();
  UnitRecord rec = simulate_unit(sc, 123);
  ModelConfig mc = micro_model();
  mc.diffusion_scale = 0.0;
  LipscdeModel model(mc);
  LatentPath p1 = model.forward_unit_path(rec, 1);
  LatentPath p2 = model.forward_unit_path(rec, 999);
  CHECK(p1.states == p2.states);
}

TEST_CASE("forward_unit: latent at t0 equals the learned initial map") {
  SimConfig sc = micro_sim();
  UnitRecord rec = simulate_unit(sc, 124);
  ModelConfig mc = micro_model();
  LipscdeModel model(mc);
  LatentPath p = model.forward_unit_path(rec, 5);

  // initial input: first observation, z_0 = 0
  std::vector<double> in;
  for (std::size_t c = 0; c < mc.d; ++c) in.push_back(rec.x(0, c));
  for (std::size_t c = 0; c < mc.j; ++c) in.push_back(rec.a(0, c));
  in.push_back(0.0);  // z_0
  const Param* w0 = nullptr;
  for (const Param& prm : model.params())
    if (prm.name == "latent.init_w") w0 = &prm;
  REQUIRE(w0 != nullptr);
  for (std::size_t i = 0; i < mc.latent_dim; ++i) {
    double want = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) want += w0->value(i, c) * in[c];
    CHECK(p.states(0, i) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("forward_unit: sample means concentrate like 1/sqrt(n)") {
  SimConfig sc = micro_sim();
  UnitRecord rec = simulate_unit(sc, 125);
  ModelConfig mc = micro_model();
  mc.diffusion_scale = 0.4;
  LipscdeModel model(mc);

  auto final_state = [&](uint64_t seed) {
    LatentPath p = model.forward_unit_path(rec, seed);
    return p.states(p.length() - 1, 0);
  };
  // std of the mean over n samples, estimated from 40 independent batches
  auto std_of_mean = [&](std::size_t n, uint64_t tag) {
    std::vector<double> means;
    for (std::size_t b = 0; b < 40; ++b) {
      double acc = 0.0;
      for (std::size_t s = 0; s < n; ++s)
        acc += final_state(rng_u64(tag, Stream::kTest, b, s));
      means.push_back(acc / double(n));
    }
    double m = 0.0;
    for (double v : means) m += v;
    m /= double(means.size());
    double var = 0.0;
    for (double v : means) var += (v - m) * (v - m);
    return std::sqrt(var / double(means.size() - 1));
  };
  double s10 = std_of_mean(10, 1);
  double s40 = std_of_mean(40, 2);
  double ratio = s10 / s40;  // expect ~2
  CHECK(ratio > 1.6);
  CHECK(ratio < 2.4);
}

TEST_CASE("factor loss: zero head gives ln 2 per bit; oracle match") {
  SimConfig sc = micro_sim();
  UnitRecord rec = simulate_unit(sc, 126);
  ModelConfig mc = micro_model();
  mc.diffusion_scale = 0.0;
  LipscdeModel model(mc);
  for (Param& p : model.params())
    if (p.name == "latent.treat_w" || p.name == "latent.treat_b") p.value.fill(0.0);

  Tape tape;
  PreparedUnit prep = model.prepare(rec.observed());
  UnitForward fwd = model.forward_unit(tape, prep, 0);
  Var loss = model.latent().factor_loss(tape, fwd, rec.a);
  CHECK(loss.value().scalar_value() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // direct summation oracle with live logits
  ModelConfig mc2 = micro_model();
  mc2.diffusion_scale = 0.0;
  LipscdeModel model2(mc2);
  Tape tape2;
  PreparedUnit prep2 = model2.prepare(rec.observed());
  UnitForward fwd2 = model2.forward_unit(tape2, prep2, 0);
  Var loss2 = model2.latent().factor_loss(tape2, fwd2, rec.a);
  double acc = 0.0;
  std::size_t m = rec.length();
  for (std::size_t k = 0; k + 1 < m; ++k) {
    const Tensor& lg = fwd2.treat_logits[k].value();
    double step = 0.0;
    for (std::size_t c = 0; c < mc2.j; ++c) {
      double l = std::clamp(lg[c], -30.0, 30.0);
      double sp = std::max(l, 0.0) + std::log1p(std::exp(-std::abs(l)));
      step += sp - rec.a(k + 1, c) * l;
    }
    acc += step / double(mc2.j);
  }
  acc /= double(m - 1);
  CHECK(loss2.value().scalar_value() == doctest::Approx(acc).epsilon(1e-12));
}

TEST_CASE("factor loss rejects non-binary treatments") {
  SimConfig sc = micro_sim();
  UnitRecord rec = simulate_unit(sc, 127);
  ModelConfig mc = micro_model();
  LipscdeModel model(mc);
  Tape tape;
  PreparedUnit prep = model.prepare(rec.observed());
  UnitForward fwd = model.forward_unit(tape, prep, 0);
  Tensor bad = rec.a;
  bad(0, 0) = 0.5;
  CHECK_THROWS_AS(model.latent().factor_loss(tape, fwd, bad), ContractViolation);
}

TEST_CASE("treatment prediction is strictly causal under future mutations") {
  SimConfig sc = micro_sim();
  UnitRecord rec = simulate_unit(sc, 128);
  ModelConfig mc = micro_model();
  mc.diffusion_scale = 0.0;
  LipscdeModel model(mc);

  Tape t1;
  PreparedUnit prep1 = model.prepare(rec.observed());
  UnitForward f1 = model.forward_unit(t1, prep1, 3);

  // mutate treatments and covariates strictly after t_k
  std::size_t k = 2;
  UnitRecord mut = rec;
  for (std::size_t s = k + 1; s < mut.length(); ++s) {
    for (std::size_t c = 0; c < mc.j; ++c) mut.a(s, c) = 1.0 - mut.a(s, c);
    for (std::size_t c = 0; c < mc.d; ++c) mut.x(s, c) += 2.0;
  }
  Tape t2;
  PreparedUnit prep2 = model.prepare(mut.observed());
  UnitForward f2 = model.forward_unit(t2, prep2, 3);

  for (std::size_t s = 0; s <= k; ++s)
    CHECK(f1.treat_logits[s].value() == f2.treat_logits[s].value());
}

TEST_CASE("projections hold after an optimizer step") {
  ModelConfig mc = micro_model();
  LipscdeModel model(mc);
  // fake a gradient and step
  for (Param& p : model.params())
    for (std::size_t i = 0; i < p.grad.size(); ++i)
      p.grad[i] = 0.1 * double(i % 5) - 0.2;
  Adam adam(model.params(), AdamConfig{});
  adam.step();
  for (const Param& p : model.params()) {
    if (p.projection == Projection::kSpectral)
      CHECK(tt::spectral_norm_oracle(p.value) <= p.lipschitz_bound + 1e-6);
    if (p.projection == Projection::kConvInduced)
      CHECK(tt::spectral_norm_oracle(
                tt::conv_induced_matrix(p.value, std::size_t(p.proj_len))) <=
            p.lipschitz_bound + 1e-6);
  }
}

TEST_CASE("matrix field contraction agrees with the fused solver path") {
  ParamStore store;
  LatentConfig cfg;
  cfg.d = 2;
  cfg.j = 1;
  cfg.z_dim = 1;
  cfg.latent_dim = 3;
  LatentModel lm(store, cfg, 31);
  store.apply_projections();
  Tape tape;
  Tensor uv = tt::random_vector(3, 300);
  Tensor ev = tt::random_vector(3, 301);
  Tensor dh = tt::random_vector(cfg.control_channels(), 302);
  Var f = lm.drift_field(tape, tape.constant(uv), tape.constant(ev));
  Var contveq = tape.matvec(f, tape.constant(dh));
  // fused route: v * (w_c . dH)
  Var v = tape.lip_cell(tape.param(lm.drift_m()), tape.param(lm.drift_w()),
                        tape.param(lm.drift_u()),
                        tape.param(find_param(store, "latent.drift.b")),
                        tape.constant(uv), tape.constant(ev), cfg.delta_stability);
  const Param* chan = nullptr;
  for (const Param& p : store)
    if (p.name == "latent.drift.chan") chan = &p;
  double s = 0.0;
  for (std::size_t c = 0; c < dh.size(); ++c) s += chan->value[c] * dh[c];
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(contveq.value()[i] == doctest::Approx(v.value()[i] * s).epsilon(1e-12));
}
