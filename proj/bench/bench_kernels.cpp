// Serial reference vs OpenMP kernels.

#include "edgeslice/kernels/kernels.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace edgeslice::kernels;

namespace {

RowMatrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  RowMatrix m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = n(rng);
  return m;
}

std::vector<TierLottery> scenario_lotteries() {
  // Two-tier mixes over catalogs shaped like the three scenario regions.
  std::vector<TierLottery> out;
  for (int n : {20, 25, 30}) {
    TierLottery l;
    l.weights.assign(static_cast<std::size_t>(n), 0.0);
    l.weights[static_cast<std::size_t>(n / 2)] = 0.6;
    l.weights[static_cast<std::size_t>(n / 2 + 1)] = 0.4;
    for (int k = 1; k <= n; ++k) l.costs.push_back(k * 1.5);
    out.push_back(std::move(l));
  }
  return out;
}

template <bool Parallel>
void BM_Sparsity(benchmark::State& state) {
  const auto L = state.range(0);
  const auto q = random_matrix(L, 32, 1), k = random_matrix(L, 32, 2);
  for (auto _ : state) {
    auto m = Parallel ? parallel::sparsity_measurement(q, k) : serial::sparsity_measurement(q, k);
    benchmark::DoNotOptimize(m.data());
  }
  state.SetItemsProcessed(state.iterations() * L * L);
}

template <bool Parallel>
void BM_Rounding(benchmark::State& state) {
  const auto lotteries = scenario_lotteries();
  const auto trials = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    auto c = Parallel ? parallel::rounding_trial_costs(lotteries, trials, 7)
                      : serial::rounding_trial_costs(lotteries, trials, 7);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(trials));
}

}  // namespace

BENCHMARK(BM_Sparsity<false>)->Name("sparsity/serial")->Arg(48)->Arg(192)->Arg(768);
BENCHMARK(BM_Sparsity<true>)->Name("sparsity/parallel")->Arg(48)->Arg(192)->Arg(768);
BENCHMARK(BM_Rounding<false>)->Name("rounding/serial")->Arg(10000)->Arg(100000);
BENCHMARK(BM_Rounding<true>)->Name("rounding/parallel")->Arg(10000)->Arg(100000);

BENCHMARK_MAIN();
