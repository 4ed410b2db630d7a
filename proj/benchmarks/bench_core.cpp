#include <benchmark/benchmark.h>

#include "lipscde/fourier.hpp"
#include "lipscde/lipschitz.hpp"
#include "lipscde/model.hpp"
#include "lipscde/rng.hpp"
#include "lipscde/simulator.hpp"
#include "lipscde/train.hpp"

using namespace lipscde;

namespace {

Tensor random_vector(std::size_t n, uint64_t seed) {
  Tensor t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = rng_normal(seed, Stream::kTest, i);
  return t;
}

void BM_Dft(benchmark::State& state) {
  Tensor x = random_vector(std::size_t(state.range(0)), 1);
  for (auto _ : state) {
    Spectrum s = dft(x);
    benchmark::DoNotOptimize(s.real.data());
  }
}
BENCHMARK(BM_Dft)->Arg(16)->Arg(30)->Arg(64);

void BM_SpectralProject(benchmark::State& state) {
  auto n = std::size_t(state.range(0));
  Tensor m(n, n);
  for (std::size_t i = 0; i < m.size(); ++i)
    m[i] = rng_normal(2, Stream::kTest, i);
  for (auto _ : state) {
    Tensor out = spectral_norm_project(m, 1.0);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_SpectralProject)->Arg(8)->Arg(16);

void BM_ConvProject(benchmark::State& state) {
  Tensor k(std::size_t(4), std::size_t(8), std::size_t(5));
  for (std::size_t i = 0; i < k.size(); ++i)
    k[i] = rng_normal(3, Stream::kTest, i);
  for (auto _ : state) {
    Tensor kk = k;
    project_conv_kernel(kk, 1.0, std::size_t(state.range(0)));
    benchmark::DoNotOptimize(kk.data());
  }
}
BENCHMARK(BM_ConvProject)->Arg(16)->Arg(32);

struct ForwardFixture {
  SimConfig sc;
  ModelConfig mc;
  UnitRecord rec;
  LipscdeModel model;
  PreparedUnit prep;

  ForwardFixture()
      : sc{}, mc{}, rec{}, model{(init_sim(sc), init_model(mc), mc)},
        prep{} {
    rec = simulate_unit(sc, 42);
    prep = model.prepare(rec.observed());
  }
  static void init_sim(SimConfig& s) { s.t_steps = 30; }
  static void init_model(ModelConfig& m) { m.init_seed = 9; }
};

void BM_UnitForwardBackward(benchmark::State& state) {
  static ForwardFixture fx;
  Tape tape;
  for (auto _ : state) {
    tape.clear();
    fx.model.params().zero_grad();
    UnitLossVars ul = unit_training_loss(tape, fx.model, fx.prep, 7);
    Var total = tape.add(ul.factor, ul.outcome);
    tape.backward(total);
    benchmark::DoNotOptimize(total.value().scalar_value());
  }
}
BENCHMARK(BM_UnitForwardBackward);

void BM_SimulateUnit(benchmark::State& state) {
  SimConfig sc;
  uint64_t seed = 0;
  for (auto _ : state) {
    UnitRecord rec = simulate_unit(sc, ++seed);
    benchmark::DoNotOptimize(rec.y.data());
  }
}
BENCHMARK(BM_SimulateUnit);

}  // namespace

BENCHMARK_MAIN();
