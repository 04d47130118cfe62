#include <benchmark/benchmark.h>

#include "adastab/diagnostics.hpp"
#include "adastab/experiment.hpp"
#include "adastab/noise.hpp"
#include "adastab/objective.hpp"
#include "adastab/optimizer.hpp"
#include "adastab/rng.hpp"

namespace {

using namespace adastab;

void BM_NormalDraws(benchmark::State& state) {
  RandomStream stream(SeedSpec{42, 0, 0});
  for (auto _ : state) {
    benchmark::DoNotOptimize(stream.next_normal());
  }
}
BENCHMARK(BM_NormalDraws);

void BM_AdaGradStep(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  RandomStream stream(SeedSpec{42, 0, 0});
  auto st = make_adagrad_state(Vector(d, 1.0));
  Vector g = draw_standard_normal(stream, d);
  for (auto _ : state) {
    st = adagrad_step(st, g);
    benchmark::DoNotOptimize(st.s_hi);
  }
}
BENCHMARK(BM_AdaGradStep)->Arg(2)->Arg(16)->Arg(128);

void BM_RmsPropStep(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  RandomStream stream(SeedSpec{42, 0, 0});
  auto st = make_rmsprop_state(Vector(d, 1.0));
  Vector g = draw_standard_normal(stream, d);
  for (auto _ : state) {
    st = rmsprop_step(st, g);
    benchmark::DoNotOptimize(st.n);
  }
}
BENCHMARK(BM_RmsPropStep)->Arg(2)->Arg(16)->Arg(128);

void BM_InstrumentedTrajectory(benchmark::State& state) {
  ExperimentConfig cfg;
  cfg.problem_id = "double_well";
  cfg.dim = 2;
  cfg.noise_id = "affine_gaussian";
  cfg.noise_params = {{"a", 0.5}, {"b", 0.5}};
  cfg.theta1 = {1.5, 1.5};
  cfg.horizon = static_cast<std::int64_t>(state.range(0));
  cfg.runs = 1;
  Objective obj = make_objective(cfg.problem_id, cfg.dim);
  NoiseModel noise = make_noise(cfg.noise_id, obj, cfg.noise_params);
  TheoryConstants constants =
      compute_constants(obj.smoothness, 1.25, noise.sigma1, 1.0, 1.0, 0.9);
  constants.delta_tau = 1e9;
  constants.m_const = 1.0;
  for (auto _ : state) {
    RunSummary sum = run_trajectory(cfg, obj, noise, constants, 0);
    benchmark::DoNotOptimize(sum.sup_g);
  }
  state.SetItemsProcessed(state.iterations() * cfg.horizon);
}
BENCHMARK(BM_InstrumentedTrajectory)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
