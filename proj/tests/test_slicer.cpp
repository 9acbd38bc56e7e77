#include "edgeslice/kernels/kernels.hpp"
#include "edgeslice/slicer/slicer.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace edgeslice;
using namespace edgeslice::slicer;
using edgeslice::testing::r1_catalog;
using edgeslice::testing::r2_catalog;
using edgeslice::testing::r3_catalog;
using edgeslice::testing::table_radio;

namespace {

const core::EconomicParams kEcon{1.0, 1.0, 24, 6};

TaskStats stats_for(double bits, double density) { return {bits, density, 1000.0}; }

FractionalDecision fractional_r1(double bandwidth_hz) {
  RegionDemand d;
  d.region_id = 1;
  d.bandwidth_req_hz = bandwidth_hz;
  d.vm_req = 0.0;
  return solve_relaxed_lp(d, r1_catalog());
}

// Tiers 1..n (scaled) with convex increasing costs.
core::SliceCatalog random_convex_catalog(std::mt19937_64& rng) {
  core::SliceCatalog c;
  c.region_id = 1;
  std::uniform_int_distribution<int> size(2, 30);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  const int nb = size(rng), nv = size(rng);
  double cost = u(rng), step = u(rng);
  for (int k = 1; k <= nb; ++k) {
    c.bandwidth_tiers_hz.push_back(k * 1e6);
    c.bandwidth_costs.push_back(cost);
    cost += step;
    step += u(rng) * 0.2;
  }
  cost = u(rng);
  step = u(rng);
  for (int k = 1; k <= nv; ++k) {
    c.vm_tiers.push_back(k);
    c.vm_costs.push_back(cost);
    cost += step;
    step += u(rng) * 0.2;
  }
  return c;
}

}  // namespace

TEST(Demand, Examples) {
  const auto radio = table_radio();
  const auto d = demand_from_prediction(1, 10, stats_for(1.6e6, 500), 0.3, kEcon, radio, 2e9);
  EXPECT_NEAR(d.bandwidth_req_hz / 1.5417e7, 1.0, 1e-4);
  EXPECT_NEAR(d.vm_req, 10 * 8e8 / (0.7 * 2e9), 1e-9);
  EXPECT_NEAR(d.vm_req, 5.714, 1e-3);
  const auto zero = demand_from_prediction(1, 0, stats_for(1.6e6, 500), 0.3, kEcon, radio, 2e9);
  EXPECT_EQ(zero.bandwidth_req_hz, 0.0);
  EXPECT_EQ(zero.vm_req, 0.0);
  EXPECT_THROW(demand_from_prediction(1, 5, stats_for(1.6e6, 500), 1.0, kEcon, radio, 2e9), std::invalid_argument);
  EXPECT_THROW(demand_from_prediction(1, 5, stats_for(1.6e6, 500), 0.0, kEcon, radio, 2e9), std::invalid_argument);
}

TEST(RelaxedLp, TwoTierMix) {
  const auto f = fractional_r1(1.5417e7);
  const auto cat = r1_catalog();
  EXPECT_NEAR(f.bandwidth_weights[14], 0.583, 1e-3);
  EXPECT_NEAR(f.bandwidth_weights[15], 0.417, 1e-3);
  double bw_cost = 0;
  for (std::size_t k = 0; k < cat.bandwidth_costs.size(); ++k) bw_cost += f.bandwidth_weights[k] * cat.bandwidth_costs[k];
  EXPECT_NEAR(bw_cost, 3 * 15.417, 1e-9);
  EXPECT_NEAR(bw_cost, 46.25, 1e-2);
}

TEST(RelaxedLp, ZeroAndExactDemand) {
  const auto zero = fractional_r1(0.0);
  EXPECT_EQ(zero.bandwidth_weights[0], 1.0);
  EXPECT_EQ(zero.vm_weights[0], 1.0);
  const auto exact = fractional_r1(7e6);
  EXPECT_EQ(exact.bandwidth_weights[6], 1.0);
  double total = 0;
  for (double w : exact.bandwidth_weights) total += w;
  EXPECT_EQ(total, 1.0);
}

TEST(RelaxedLp, OverDemandClampsToLargestTier) {
  const auto f = fractional_r1(25e6);
  EXPECT_TRUE(f.bandwidth_over_demand);
  EXPECT_EQ(f.bandwidth_weights.back(), 1.0);
}

TEST(RelaxedLp, MatchesDenseEnumerationOfPairs) {
  // Independent oracle: the LP optimum over a simplex with one covering constraint
  // is attained at a vertex of the constraint polytope, i.e. a single tier or a pair.
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    std::uniform_int_distribution<int> n(2, 12);
    std::uniform_real_distribution<double> u(0.1, 5.0);
    const int size = n(rng);
    std::vector<double> tiers, costs;
    double t = 0;
    for (int k = 0; k < size; ++k) {
      t += u(rng);
      tiers.push_back(t);
      costs.push_back(u(rng));
    }
    const double demand = std::uniform_real_distribution<double>(0.0, t)(rng);
    double best = 1e300;
    for (int a = 0; a < size; ++a) {
      if (tiers[a] >= demand) best = std::min(best, costs[a]);
      for (int b = 0; b < size; ++b) {
        if (tiers[a] < demand && tiers[b] > demand) {
          const double w = (demand - tiers[a]) / (tiers[b] - tiers[a]);
          best = std::min(best, (1 - w) * costs[a] + w * costs[b]);
        }
      }
    }
    const auto mix = solve_tier_lp(demand, tiers, costs);
    EXPECT_NEAR(mix.cost, best, 1e-9 * std::max(1.0, best));
    double cap = 0, total = 0;
    for (int k = 0; k < size; ++k) {
      cap += mix.weights[k] * tiers[k];
      total += mix.weights[k];
    }
    EXPECT_GE(cap, demand - 1e-9 * t);
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(RandomRound, OneHotIsFixed) {
  std::mt19937_64 rng(1);
  const auto f = fractional_r1(7e6);
  for (int i = 0; i < 100; ++i) {
    const auto d = random_round(f, rng);
    EXPECT_EQ(d.bandwidth_index(), 6u);
    EXPECT_EQ(d.vm_index(), 0u);
  }
}

TEST(RandomRound, FrequenciesAndUnbiasedCost) {
  std::mt19937_64 rng(2);
  const auto f = fractional_r1(1.5417e7);
  const auto cat = r1_catalog();
  const int n = 100000;
  int upper = 0;
  double total = 0.0, total_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto d = random_round(f, rng);
    ASSERT_TRUE(d.bandwidth_index() == 14 || d.bandwidth_index() == 15);
    upper += d.bandwidth_index() == 15;
    const double c = cat.bandwidth_costs[d.bandwidth_index()];
    total += c;
    total_sq += c * c;
  }
  EXPECT_NEAR(upper / static_cast<double>(n), 0.417, 0.01);
  const double mean = total / n;
  const double se = std::sqrt((total_sq / n - mean * mean) / n);
  EXPECT_NEAR(mean, 46.25, 0.01 * 46.25);
  EXPECT_LT(std::abs(mean - 3 * 15.417), 3 * se);
}

TEST(RandomRound, ChernoffEnvelopeHolds) {
  const std::vector<core::SliceCatalog> cats{r1_catalog(), r2_catalog(), r3_catalog()};
  const std::vector<double> demands{1.5417e7, 12.3e6, 17.8e6};
  std::vector<kernels::TierLottery> lotteries;
  double lp_sum = 0.0, max_cost = 0.0;
  for (std::size_t r = 0; r < cats.size(); ++r) {
    RegionDemand d;
    d.region_id = cats[r].region_id;
    d.bandwidth_req_hz = demands[r];
    const auto f = solve_relaxed_lp(d, cats[r]);
    lotteries.push_back({f.bandwidth_weights, cats[r].bandwidth_costs});
    for (std::size_t k = 0; k < f.bandwidth_weights.size(); ++k) lp_sum += f.bandwidth_weights[k] * cats[r].bandwidth_costs[k];
    max_cost = std::max(max_cost, cats[r].bandwidth_costs.back());
  }
  const auto costs = kernels::parallel::rounding_trial_costs(lotteries, 100000, 17);
  const double mu = chernoff_mu(lp_sum, cats.size(), max_cost);
  for (double eps : {0.1, 0.2, 0.5}) {
    const double hits = std::count_if(costs.begin(), costs.end(), [&](double c) { return c >= (1 + eps) * lp_sum; });
    EXPECT_LE(hits / costs.size(), chernoff_envelope(eps, mu)) << "eps " << eps;
  }
}

TEST(RandomRound, AlwaysOneHot) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const auto cat = random_convex_catalog(rng);
    RegionDemand d;
    d.region_id = cat.region_id;
    d.bandwidth_req_hz = std::uniform_real_distribution<double>(0, cat.bandwidth_tiers_hz.back() * 1.2)(rng);
    d.vm_req = std::uniform_real_distribution<double>(0, cat.vm_tiers.back() * 1.2)(rng);
    const auto decision = random_round(solve_relaxed_lp(d, cat), rng);
    EXPECT_NO_THROW(decision.validate(cat));
  }
}

TEST(BruteForce, Examples) {
  RegionDemand d;
  d.region_id = 1;
  d.bandwidth_req_hz = 1.5417e7;
  const auto r1 = r1_catalog();
  auto b = brute_force_tier(d.bandwidth_req_hz, r1.bandwidth_tiers_hz, r1.bandwidth_costs);
  EXPECT_EQ(b.index, 15u);
  EXPECT_EQ(b.cost, 48.0);
  b = brute_force_tier(0.0, r1.bandwidth_tiers_hz, r1.bandwidth_costs);
  EXPECT_EQ(b.index, 0u);
  EXPECT_EQ(b.cost, 3.0);
  b = brute_force_tier(21e6, r1.bandwidth_tiers_hz, r1.bandwidth_costs);
  EXPECT_EQ(b.index, 19u);
  EXPECT_FALSE(b.feasible);
}

TEST(BruteForce, LpLowerBoundsIntegerOptimum) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    const auto cat = random_convex_catalog(rng);
    RegionDemand d;
    d.region_id = cat.region_id;
    d.bandwidth_req_hz = std::uniform_real_distribution<double>(0, cat.bandwidth_tiers_hz.back())(rng);
    d.vm_req = std::uniform_real_distribution<double>(0, cat.vm_tiers.back())(rng);
    const auto frac = solve_relaxed_lp(d, cat);
    const auto opt = brute_force_optimal(d, cat);
    EXPECT_TRUE(opt.feasible);
    EXPECT_LE(lp_cost(frac, cat), opt.cost + 1e-9);
  }
}

TEST(Aggregation, MaxAndMean) {
  const std::vector<double> h{4, 7, 5, 6, 2, 6};
  EXPECT_EQ(aggregate_counts(h, Aggregation::kMax), 7.0);
  EXPECT_EQ(aggregate_counts(h, Aggregation::kMean), 5.0);
  EXPECT_EQ(aggregation_from_string("mean"), Aggregation::kMean);
  EXPECT_THROW(aggregation_from_string("median"), std::invalid_argument);
}

TEST(AdjustSlices, ConstantTrafficGivesIdenticalDecisions) {
  traffic::TrafficSeries s;
  s.region_ids = {1, 2, 3};
  s.counts.assign(3, std::vector<int>(144, 6));
  const std::vector<core::SliceCatalog> cats{r1_catalog(), r2_catalog(), r3_catalog()};
  const std::vector<TaskStats> stats(3, stats_for(1.6e6, 300));
  SlicerConfig cfg{{0.3, 0.3, 0.3}, Aggregation::kMax};
  OracleForecaster oracle;
  std::mt19937_64 rng(5);
  const auto radio = table_radio();
  const auto first = adjust_slices(oracle, s, 48, 8, stats, cats, cfg, kEcon, radio, rng);
  for (int h = 9; h < 20; ++h) {
    const auto next = adjust_slices(oracle, s, static_cast<std::size_t>(h * 6), h, stats, cats, cfg, kEcon, radio, rng);
    for (std::size_t r = 0; r < 3; ++r) {
      EXPECT_EQ(next.diagnostics[r].bandwidth_req_hz, first.diagnostics[r].bandwidth_req_hz);
      EXPECT_EQ(next.diagnostics[r].lp_cost, first.diagnostics[r].lp_cost);
    }
  }
}

TEST(AdjustSlices, StepScalesDemandLinearly) {
  traffic::TrafficSeries s;
  s.region_ids = {1};
  s.counts = {std::vector<int>(24, 4)};
  for (int k = 12; k < 24; ++k) s.counts[0][k] = 10;
  const std::vector<core::SliceCatalog> cats{r1_catalog()};
  const std::vector<TaskStats> stats{stats_for(1.6e6, 500)};
  SlicerConfig cfg{{0.3}, Aggregation::kMax};
  OracleForecaster oracle;
  std::mt19937_64 rng(6);
  const auto before = adjust_slices(oracle, s, 6, 1, stats, cats, cfg, kEcon, table_radio(), rng);
  const auto after = adjust_slices(oracle, s, 12, 2, stats, cats, cfg, kEcon, table_radio(), rng);
  EXPECT_NEAR(after.diagnostics[0].bandwidth_req_hz / before.diagnostics[0].bandwidth_req_hz, 2.5, 1e-12);
}

TEST(AdjustSlices, OracleMatchesKnownCounts) {
  const auto s = traffic::synthesize({.seed = 4, .regions = 3, .days = 2});
  const std::vector<core::SliceCatalog> cats{r1_catalog(), r2_catalog(), r3_catalog()};
  const std::vector<TaskStats> stats(3, stats_for(1.6e6, 300));
  SlicerConfig cfg{{0.3, 0.2, 0.4}, Aggregation::kMax};
  OracleForecaster oracle;
  std::mt19937_64 a(7), b(7);
  const auto via_oracle = adjust_slices(oracle, s, 60, 10, stats, cats, cfg, kEcon, table_radio(), a);
  std::vector<double> users;
  for (const auto& row : s.counts) users.push_back(*std::max_element(row.begin() + 60, row.begin() + 66));
  const auto direct = slices_for_users(users, 10, stats, cats, cfg, kEcon, table_radio(), b);
  EXPECT_EQ(via_oracle.decisions, direct.decisions);
}

TEST(TaskStatsTest, RunningMeanAndFallback) {
  const TaskStats fallback{1.0, 2.0, 3.0};
  EXPECT_EQ(TaskStats::from_tasks({}, fallback).mean_data_bits, 1.0);
  const std::vector<core::TaskSpec> tasks{{2e6, 400, 1, 100}, {4e6, 600, 2, 300}};
  const auto s = TaskStats::from_tasks(tasks, fallback);
  EXPECT_DOUBLE_EQ(s.mean_data_bits, 3e6);
  EXPECT_DOUBLE_EQ(s.mean_density, 500);
  EXPECT_DOUBLE_EQ(s.mean_distance_m, 200);
}
