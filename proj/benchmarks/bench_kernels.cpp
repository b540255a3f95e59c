#include <cstdint>
#include <vector>

#include <benchmark/benchmark.h>

#include "ftsim/distribution.hpp"
#include "ftsim/problem.hpp"
#include "ftsim/transfer_plan.hpp"

using namespace ftsim;

static void BM_StencilAssembly(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Problem prob = make_poisson27(n);
  for (auto _ : state) {
    LocalProblem lp = prob.block_of(RowRange{0, prob.global_rows});
    benchmark::DoNotOptimize(lp.a.val.data());
  }
  state.SetItemsProcessed(state.iterations() * poisson27_nnz(n));
}
BENCHMARK(BM_StencilAssembly)->Arg(8)->Arg(12)->Arg(16);

static void BM_ProblemSerializeRoundTrip(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Problem prob = make_poisson27(n);
  LocalProblem lp = prob.block_of(RowRange{0, prob.global_rows / 2});
  for (auto _ : state) {
    std::vector<std::uint8_t> bytes = serialize_problem(lp);
    LocalProblem back = deserialize_problem(bytes);
    benchmark::DoNotOptimize(back.b.data());
  }
  state.SetBytesProcessed(state.iterations() *
                          static_cast<std::int64_t>(serialize_problem(lp).size()));
}
BENCHMARK(BM_ProblemSerializeRoundTrip)->Arg(8)->Arg(12);

static void BM_ShrinkPlan(benchmark::State& state) {
  const int p = static_cast<int>(state.range(0));
  const int k = static_cast<int>(state.range(1));
  BlockDistribution dist = canonical_distribution(1 << 20, p);
  std::vector<Rank> failed;
  for (int i = 0; i < k; ++i) failed.push_back(static_cast<Rank>(p - 1 - 2 * i));
  for (auto _ : state) {
    TransferPlan plan = plan_shrink_transfers(dist, failed, 2);
    benchmark::DoNotOptimize(plan.items.data());
  }
}
BENCHMARK(BM_ShrinkPlan)->Args({64, 1})->Args({256, 1})->Args({256, 8})->Args({1024, 16});

static void BM_HaloPatterns(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int p = static_cast<int>(state.range(1));
  Problem prob = make_poisson27(n);
  BlockDistribution dist = canonical_distribution(prob.global_rows, p);
  std::vector<LocalProblem> blocks;
  std::vector<const CsrBlock*> ptrs;
  for (Rank r = 0; r < p; ++r) blocks.push_back(prob.block_of(dist.range_of(r)));
  for (const auto& b : blocks) ptrs.push_back(&b.a);
  for (auto _ : state) {
    auto patterns = build_patterns(ptrs, dist);
    benchmark::DoNotOptimize(patterns.data());
  }
}
BENCHMARK(BM_HaloPatterns)->Args({8, 4})->Args({12, 8});
