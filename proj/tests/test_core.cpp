#include "edgeslice/core/model.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace edgeslice;
using namespace edgeslice::core;
using edgeslice::testing::r1_catalog;
using edgeslice::testing::r2_catalog;
using edgeslice::testing::r3_catalog;
using edgeslice::testing::table_radio;

namespace {

const RadioParams kRadio = table_radio();

TaskSpec task(double bits, double density, int priority = 1, double distance = 1000.0) {
  return {bits, density, priority, distance};
}

}  // namespace

TEST(Radio, DecibelConversionIsLinear) {
  EXPECT_NEAR(kRadio.gain_ref, 1e-6, 1e-18);
  EXPECT_NEAR(kRadio.noise_power_mw, 1e-11, 1e-23);
  for (double x : {1e-14, 3.7e-6, 1.0, 42.0, 8e9}) {
    EXPECT_NEAR(db_to_linear(linear_to_db(x)) / x, 1.0, 1e-12);
    EXPECT_NEAR(dbm_to_mw(mw_to_dbm(x)) / x, 1.0, 1e-12);
  }
}

TEST(UploadRate, TableParametersAtOneKilometre) {
  EXPECT_NEAR(upload_rate(1e6, 1000.0, kRadio) / 3.4594e6, 1.0, 1e-4);
  EXPECT_NEAR(upload_rate(1e6, 1000.0, kRadio), 1e6 * std::log2(11.0), 1e-6);
}

TEST(UploadRate, ZeroBandwidthAndUnitDistance) {
  EXPECT_EQ(upload_rate(0.0, 500.0, kRadio), 0.0);
  EXPECT_NEAR(upload_rate(1e6, 1.0, kRadio) / 2.32535e7, 1.0, 1e-5);
}

TEST(UploadRate, DomainErrors) {
  EXPECT_THROW(upload_rate(-1.0, 10.0, kRadio), std::domain_error);
  EXPECT_THROW(upload_rate(1e6, 0.5, kRadio), std::domain_error);
}

TEST(UploadRate, MonotoneInBandwidthAndDistance) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> bw(0.0, 3e7), dist(1.0, 2000.0);
  for (int i = 0; i < 1000; ++i) {
    const double b1 = bw(rng), b2 = bw(rng), l1 = dist(rng), l2 = dist(rng);
    const double l = std::min(l1, l2);
    EXPECT_LE(upload_rate(std::min(b1, b2), l, kRadio), upload_rate(std::max(b1, b2), l, kRadio));
    EXPECT_GE(upload_rate(b1, std::min(l1, l2), kRadio), upload_rate(b1, std::max(l1, l2), kRadio));
  }
}

TEST(UploadTime, Examples) {
  EXPECT_NEAR(upload_time(task(1.6e6, 500), 3.4594e6), 0.46251, 1e-5);
  EXPECT_EQ(upload_time(task(1.6e6, 500), 1.6e6), 1.0);
  TaskSpec empty = task(1.0, 0.0);
  empty.data_bits = 0.0;
  EXPECT_EQ(upload_time(empty, 5.0), 0.0);
  EXPECT_EQ(upload_time(task(1.6e6, 500), 0.0), kInfiniteTime);
}

TEST(ExecTime, Examples) {
  EXPECT_NEAR(exec_time(task(1.6e6, 500), 2e9), 0.4, 1e-12);
  EXPECT_EQ(exec_time(task(1.6e6, 0), 2e9), 0.0);
  EXPECT_NEAR(exec_time(task(1.6e6, 100), 2e9), 0.08, 1e-12);
  EXPECT_THROW(exec_time(task(1.6e6, 100), 0.0), std::domain_error);
}

TEST(QueueTime, Examples) {
  VmQueue q;
  EXPECT_EQ(queue_time(q, 2e9), 0.0);
  q.push(8e8, 0);
  q.push(8e8, 1);
  EXPECT_NEAR(queue_time(q, 2e9), 0.8, 1e-12);
  VmQueue one;
  one.push(1.6e8, 0);
  EXPECT_NEAR(queue_time(one, 2e9), 0.08, 1e-12);
}

TEST(QueueTime, ConcatenationIsAdditive) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> cycles(0.0, 1e9);
  for (int trial = 0; trial < 50; ++trial) {
    VmQueue a, b, ab;
    for (int i = 0; i < 4; ++i) {
      const double c = cycles(rng);
      a.push(c, i);
      ab.push(c, i);
    }
    for (int i = 0; i < 3; ++i) {
      const double c = cycles(rng);
      b.push(c, i);
      ab.push(c, i);
    }
    EXPECT_NEAR(queue_time(ab, 2e9), queue_time(a, 2e9) + queue_time(b, 2e9), 1e-12);
  }
}

TEST(QueueTime, DrainConsumesFifo) {
  VmQueue q;
  q.push(100.0, 0);
  q.push(50.0, 1);
  EXPECT_EQ(q.drain(120.0), 120.0);
  ASSERT_EQ(q.pending.size(), 1u);
  EXPECT_EQ(q.pending.front().remaining_cycles, 30.0);
  EXPECT_EQ(q.drain(1000.0), 30.0);
  EXPECT_TRUE(q.empty());
}

TEST(TotalTime, Examples) {
  EXPECT_NEAR(total_time(0.4625, 0.0, 0.4), 0.8625, 1e-12);
  EXPECT_EQ(total_time(0, 0, 0), 0.0);
  EXPECT_EQ(total_time(kInfiniteTime, 0, 0.4), kInfiniteTime);
  EXPECT_EQ(total_time(0.1, 0.2, 0.3), 0.1 + 0.2 + 0.3);
}

TEST(TaskRevenue, Examples) {
  const EconomicParams econ{1.0, 1.0, 24, 6};
  EXPECT_EQ(task_revenue(0.9, econ, 3), 3.0);
  EXPECT_EQ(task_revenue(1.2, econ, 2), 0.0);
  EXPECT_EQ(task_revenue(1.0, econ, 1), 1.0);
  EXPECT_EQ(task_revenue(kInfiniteTime, econ, 3), 0.0);
}

TEST(TaskRevenue, OnlyTwoValues) {
  const EconomicParams econ{2.5, 0.8, 24, 6};
  for (double t = 0.0; t < 2.0; t += 0.01) {
    for (int rho = 1; rho <= 3; ++rho) {
      const double r = task_revenue(t, econ, rho);
      EXPECT_TRUE(r == 0.0 || r == 2.5 * rho);
    }
  }
}

TEST(RentedResources, TableTiers) {
  const auto r1 = r1_catalog();
  const auto res = rented_resources(SliceDecision::from_indices(r1, 9, 7), r1);
  EXPECT_EQ(res.bandwidth_hz, 10e6);
  EXPECT_EQ(res.vm_count, 8.0);
  const auto r3 = r3_catalog();
  const auto res3 = rented_resources(SliceDecision::from_indices(r3, 29, 7), r3);
  EXPECT_EQ(res3.bandwidth_hz, 30e6);
  EXPECT_EQ(res3.vm_count, 8.0);
}

TEST(RentedResources, RejectsMalformedOneHot) {
  const auto r1 = r1_catalog();
  auto d = SliceDecision::from_indices(r1, 9, 7);
  d.bandwidth_choice[3] = 1;
  EXPECT_THROW(rented_resources(d, r1), ContractViolation);
  d.bandwidth_choice.assign(20, 0);
  EXPECT_THROW(rented_resources(d, r1), ContractViolation);
}

TEST(RentingCost, Examples) {
  const std::vector<SliceCatalog> cats{r1_catalog(), r2_catalog(), r3_catalog()};
  EXPECT_EQ(region_cost(SliceDecision::from_indices(cats[0], 9, 7), cats[0]), 46.0);
  EXPECT_EQ(region_cost(SliceDecision::from_indices(cats[2], 29, 7), cats[2]), 78.0);
  std::vector<SliceDecision> cheapest;
  for (const auto& c : cats) cheapest.push_back(SliceDecision::from_indices(c, 0, 0));
  EXPECT_EQ(renting_cost(cheapest, cats), 18.0);
}

TEST(RentingCost, MatchesDotProduct) {
  const std::vector<SliceCatalog> cats{r1_catalog(), r2_catalog(), r3_catalog()};
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<SliceDecision> ds;
    double expected = 0.0;
    for (const auto& c : cats) {
      const auto b = rng() % c.bandwidth_tiers_hz.size();
      const auto v = rng() % c.vm_tiers.size();
      auto d = SliceDecision::from_indices(c, b, v);
      for (std::size_t k = 0; k < c.bandwidth_costs.size(); ++k) expected += d.bandwidth_choice[k] * c.bandwidth_costs[k];
      for (std::size_t k = 0; k < c.vm_costs.size(); ++k) expected += d.vm_choice[k] * c.vm_costs[k];
      ds.push_back(d);
    }
    EXPECT_DOUBLE_EQ(renting_cost(ds, cats), expected);
  }
}

TEST(RentingCost, RegionMismatch) {
  const std::vector<SliceCatalog> cats{r1_catalog(), r2_catalog()};
  std::vector<SliceDecision> one{SliceDecision::from_indices(cats[0], 0, 0)};
  EXPECT_THROW(renting_cost(one, cats), ContractViolation);
  auto wrong = SliceDecision::from_indices(cats[0], 0, 0);
  wrong.region_id = 9;
  std::vector<SliceDecision> two{SliceDecision::from_indices(cats[0], 0, 0), wrong};
  EXPECT_THROW(renting_cost(two, cats), ContractViolation);
}

TEST(Profit, Examples) {
  const std::vector<double> r{100, 120}, c{40, 40};
  EXPECT_EQ(profit(r, c), 140.0);
  EXPECT_EQ(profit(r, r), 0.0);
  const std::vector<double> r46{46}, c46{46 + 1e-9};
  EXPECT_LT(profit(r46, c46), 0.0);
}

TEST(Validation, InvalidInputs) {
  EXPECT_THROW((TaskSpec{0.0, 1, 1, 10}.validate()), std::invalid_argument);
  EXPECT_THROW((TaskSpec{1.0, 1, 4, 10}.validate()), std::invalid_argument);
  EXPECT_THROW((TaskSpec{1.0, 1, 1, 0.2}.validate()), std::invalid_argument);
  auto bad = r1_catalog();
  std::swap(bad.bandwidth_tiers_hz[0], bad.bandwidth_tiers_hz[1]);
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  EXPECT_THROW((EconomicParams{1.0, 0.0, 24, 6}.validate()), std::invalid_argument);
}
