#include <benchmark/benchmark.h>

#include "ftsim/harness.hpp"

using namespace ftsim;

namespace {

ExperimentConfig small_cfg(int p, int n) {
  ExperimentConfig cfg;
  cfg.name = "bench";
  cfg.world.processes = p;
  cfg.world.cores_per_node = 16;
  cfg.world.detection_timeout_s = 0.001;
  cfg.solver.tol = 1e-8;
  cfg.poisson_n = n;
  return cfg;
}

}  // namespace

static void BM_CleanRun(benchmark::State& state) {
  ExperimentConfig cfg = small_cfg(static_cast<int>(state.range(0)), 6);
  const double base = baseline_total(cfg);
  for (auto _ : state) {
    RunOutput out = run_experiment(cfg, {}, base);
    benchmark::DoNotOptimize(out.row.total_s);
  }
}
BENCHMARK(BM_CleanRun)->Arg(2)->Arg(4)->Arg(8);

static void BM_ShrinkRecoveryRun(benchmark::State& state) {
  ExperimentConfig cfg = small_cfg(static_cast<int>(state.range(0)), 6);
  const double base = baseline_total(cfg);
  FaultPlan plan;
  plan.injections.push_back(FaultInjection{cfg.world.processes - 1, 1, 2});
  for (auto _ : state) {
    RunOutput out = run_experiment(cfg, plan, base);
    benchmark::DoNotOptimize(out.row.total_s);
  }
}
BENCHMARK(BM_ShrinkRecoveryRun)->Arg(4)->Arg(8);

static void BM_SubstituteRecoveryRun(benchmark::State& state) {
  ExperimentConfig cfg = small_cfg(static_cast<int>(state.range(0)), 6);
  cfg.strategy = RecoveryStrategy::Substitute;
  cfg.world.spares = 1;
  const double base = baseline_total(cfg);
  FaultPlan plan;
  plan.injections.push_back(FaultInjection{cfg.world.processes - 1, 1, 2});
  for (auto _ : state) {
    RunOutput out = run_experiment(cfg, plan, base);
    benchmark::DoNotOptimize(out.row.total_s);
  }
}
BENCHMARK(BM_SubstituteRecoveryRun)->Arg(4)->Arg(8);
