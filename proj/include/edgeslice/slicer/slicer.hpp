#pragma once

// Prediction-assisted slice adjustment: demand conversion, the relaxed
// renting LP, and randomized rounding back to one-hot decisions.

#include "edgeslice/core/model.hpp"
#include "edgeslice/predictor/predictor.hpp"
#include "edgeslice/traffic/traffic.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace edgeslice::slicer {

/// Historical per-region task statistics feeding the demand conversion.
struct TaskStats {
  double mean_data_bits = 0.0;
  double mean_density = 0.0;
  double mean_distance_m = 1000.0;

  /// Running mean over observed tasks; `fallback` when none were observed.
  static TaskStats from_tasks(std::span<const core::TaskSpec> tasks, const TaskStats& fallback);
};

struct RegionDemand {
  int region_id = 0;
  double bandwidth_req_hz = 0.0;
  double vm_req = 0.0;
  double predicted_users = 0.0;
  double mean_data_bits = 0.0;
  double mean_density = 0.0;
  double delay_ratio = 0.3;
};

struct FractionalDecision {
  int region_id = 0;
  std::vector<double> bandwidth_weights;
  std::vector<double> vm_weights;
  bool bandwidth_over_demand = false;
  bool vm_over_demand = false;

  void validate() const;
};

enum class Aggregation { kMax, kMean };

Aggregation aggregation_from_string(const std::string& name);
std::string to_string(Aggregation a);

/// Collapses the per-short-slot forecast of one long slot into one user count.
double aggregate_counts(std::span<const double> horizon_counts, Aggregation how);

RegionDemand demand_from_prediction(int region_id, double predicted_users, const TaskStats& stats, double omega,
                                    const core::EconomicParams& econ, const core::RadioParams& radio,
                                    double vm_freq_hz);

/// Minimum-cost distribution over tiers whose expected capacity covers `demand`.
/// Among equal-cost optima a single tier wins, then the narrowest pair, then the lowest index.
/// Demand above the largest tier returns a one-hot on the largest tier with `over_demand` set.
struct TierMix {
  std::vector<double> weights;
  double cost = 0.0;
  bool over_demand = false;
};
TierMix solve_tier_lp(double demand, std::span<const double> tiers, std::span<const double> costs);

FractionalDecision solve_relaxed_lp(const RegionDemand& demand, const core::SliceCatalog& catalog);

/// Expected cost of a fractional decision (bandwidth plus VM part).
double lp_cost(const FractionalDecision& fractional, const core::SliceCatalog& catalog);

/// One categorical draw per resource with probabilities equal to the weights.
core::SliceDecision random_round(const FractionalDecision& fractional, std::mt19937_64& rng);

struct BruteForceResult {
  std::size_t index = 0;
  double cost = 0.0;
  bool feasible = true;
};
/// Cheapest single tier meeting the demand by exhaustive enumeration.
BruteForceResult brute_force_tier(double demand, std::span<const double> tiers, std::span<const double> costs);

struct BruteForceDecision {
  core::SliceDecision decision;
  double cost = 0.0;
  bool feasible = true;
};
BruteForceDecision brute_force_optimal(const RegionDemand& demand, const core::SliceCatalog& catalog);

/// Upper bound exp(-eps^2 mu / (2 + eps)) on Pr[rounded sum >= (1 + eps) LP sum].
double chernoff_envelope(double epsilon, double mu);
/// Normalized mean mu = LP sum / (regions * largest value), as used with the bound above.
double chernoff_mu(double lp_sum, std::size_t regions, double max_value);

/// Source of per-region forecasts of the next long slot.
class Forecaster {
 public:
  virtual ~Forecaster() = default;
  /// Forecast of the `horizon` short slots starting at `end_slot`, per region.
  virtual std::vector<std::vector<double>> forecast(const traffic::TrafficSeries& history, std::size_t end_slot,
                                                    int horizon) = 0;
  virtual std::string name() const = 0;
};

class PredictorForecaster : public Forecaster {
 public:
  explicit PredictorForecaster(predictor::TrafficPredictor model) : model_(std::move(model)) {}
  std::vector<std::vector<double>> forecast(const traffic::TrafficSeries& history, std::size_t end_slot,
                                            int horizon) override;
  std::string name() const override { return "predictor"; }

 private:
  predictor::TrafficPredictor model_;
};

class NaiveForecaster : public Forecaster {
 public:
  explicit NaiveForecaster(predictor::NaiveKind kind, int window = 6) : kind_(kind), window_(window) {}
  std::vector<std::vector<double>> forecast(const traffic::TrafficSeries& history, std::size_t end_slot,
                                            int horizon) override;
  std::string name() const override;

 private:
  predictor::NaiveKind kind_;
  int window_;
};

/// Reads the true future counts; used as a perfect predictor.
class OracleForecaster : public Forecaster {
 public:
  std::vector<std::vector<double>> forecast(const traffic::TrafficSeries& history, std::size_t end_slot,
                                            int horizon) override;
  std::string name() const override { return "oracle"; }
};

struct SlicerConfig {
  std::vector<double> omega;  // per region
  Aggregation aggregation = Aggregation::kMax;
};

struct SliceDiagnostics {
  int long_slot = 0;
  int region_id = 0;
  double predicted_users = 0.0;
  double bandwidth_req_hz = 0.0;
  double vm_req = 0.0;
  double lp_cost = 0.0;
  double rounded_cost = 0.0;
  std::size_t bandwidth_tier = 0;
  std::size_t vm_tier = 0;
  bool over_demand = false;
};

struct SliceAdjustment {
  std::vector<core::SliceDecision> decisions;
  std::vector<SliceDiagnostics> diagnostics;
};

/// Forecast, aggregate, convert to demand, solve the LP and round, for every region.
SliceAdjustment adjust_slices(Forecaster& forecaster, const traffic::TrafficSeries& history, std::size_t end_slot,
                              int long_slot, std::span<const TaskStats> stats,
                              std::span<const core::SliceCatalog> catalogs, const SlicerConfig& config,
                              const core::EconomicParams& econ, const core::RadioParams& radio,
                              std::mt19937_64& rng);

/// Slicing from a known user count per region (used by the static baseline).
SliceAdjustment slices_for_users(std::span<const double> users, int long_slot, std::span<const TaskStats> stats,
                                 std::span<const core::SliceCatalog> catalogs, const SlicerConfig& config,
                                 const core::EconomicParams& econ, const core::RadioParams& radio,
                                 std::mt19937_64& rng);

void write_diagnostics(std::span<const SliceDiagnostics> rows, const std::filesystem::path& file);

}  // namespace edgeslice::slicer
