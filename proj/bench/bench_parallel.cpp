#include <benchmark/benchmark.h>

#include "pisc/conformal.hpp"
#include "pisc/monte_carlo.hpp"
#include "pisc/simulate.hpp"

namespace {

pisc::McOptions mc_options(int reps) {
  pisc::McOptions o;
  o.estimators = {pisc::McEstimator::pi_joint, pisc::McEstimator::ols};
  o.reps = reps;
  o.seed = 7;
  return o;
}

void BM_MonteCarloSerial(benchmark::State& state) {
  const auto opts = mc_options(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(pisc::run_monte_carlo_serial(pisc::SimDesign{}, opts));
}

void BM_MonteCarloParallel(benchmark::State& state) {
  const auto opts = mc_options(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(pisc::run_monte_carlo(pisc::SimDesign{}, opts));
}

pisc::PanelDataset conformal_panel() {
  pisc::SimDesign d;
  d.t1 = 1;
  d.seed = 11;
  return pisc::generate(d).data;
}

void BM_ConformalSerial(benchmark::State& state) {
  const auto d = conformal_panel();
  pisc::ConformalOptions opts;
  opts.grid_points = state.range(0);
  const long period = d.time_index.back();
  const auto grid = pisc::default_grid(d, period, opts);
  for (auto _ : state) benchmark::DoNotOptimize(pisc::conformal_interval_serial(d, period, grid, opts));
}

void BM_ConformalParallel(benchmark::State& state) {
  const auto d = conformal_panel();
  pisc::ConformalOptions opts;
  opts.grid_points = state.range(0);
  const long period = d.time_index.back();
  const auto grid = pisc::default_grid(d, period, opts);
  for (auto _ : state) benchmark::DoNotOptimize(pisc::conformal_interval(d, period, grid, opts));
}

}  // namespace

BENCHMARK(BM_MonteCarloSerial)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MonteCarloParallel)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConformalSerial)->Arg(101)->Arg(401)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConformalParallel)->Arg(101)->Arg(401)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
