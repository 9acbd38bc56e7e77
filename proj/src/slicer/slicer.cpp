#include "edgeslice/slicer/slicer.hpp"

#include "edgeslice/kernels/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <stdexcept>

namespace edgeslice::slicer {

namespace {

constexpr double kTieTolerance = 1e-9;

void check_tiers(std::span<const double> tiers, std::span<const double> costs) {
  if (tiers.empty() || tiers.size() != costs.size()) throw std::invalid_argument("tier and cost lists differ");
  for (std::size_t k = 1; k < tiers.size(); ++k) {
    if (!(tiers[k] > tiers[k - 1])) throw std::invalid_argument("tiers must be strictly ascending");
  }
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

void check_weights(const std::vector<double>& w, const char* what) {
  if (w.empty()) throw std::invalid_argument(std::string(what) + ": empty weights");
  double total = 0.0;
  for (double x : w) {
    if (!(x >= 0.0)) throw std::invalid_argument(std::string(what) + ": negative weight");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument(std::string(what) + ": weights must sum to 1");
}

double weighted_cost(std::span<const double> weights, std::span<const double> costs) {
  double c = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) c += weights[k] * costs[k];
  return c;
}

SliceDiagnostics diagnose(int long_slot, const RegionDemand& demand, const FractionalDecision& frac,
                          const core::SliceDecision& decision, const core::SliceCatalog& catalog) {
  return {long_slot,
          demand.region_id,
          demand.predicted_users,
          demand.bandwidth_req_hz,
          demand.vm_req,
          lp_cost(frac, catalog),
          core::region_cost(decision, catalog),
          decision.bandwidth_index(),
          decision.vm_index(),
          frac.bandwidth_over_demand || frac.vm_over_demand};
}

}  // namespace

TaskStats TaskStats::from_tasks(std::span<const core::TaskSpec> tasks, const TaskStats& fallback) {
  if (tasks.empty()) return fallback;
  TaskStats s{0.0, 0.0, 0.0};
  for (const auto& t : tasks) {
    s.mean_data_bits += t.data_bits;
    s.mean_density += t.density_cycles_per_bit;
    s.mean_distance_m += t.distance_m;
  }
  const auto n = static_cast<double>(tasks.size());
  s.mean_data_bits /= n;
  s.mean_density /= n;
  s.mean_distance_m /= n;
  return s;
}

void FractionalDecision::validate() const {
  check_weights(bandwidth_weights, "bandwidth");
  check_weights(vm_weights, "vm");
}

Aggregation aggregation_from_string(const std::string& name) {
  if (name == "max") return Aggregation::kMax;
  if (name == "mean") return Aggregation::kMean;
  throw std::invalid_argument("unknown aggregation: " + name);
}

std::string to_string(Aggregation a) { return a == Aggregation::kMax ? "max" : "mean"; }

double aggregate_counts(std::span<const double> horizon_counts, Aggregation how) {
  if (horizon_counts.empty()) throw std::invalid_argument("aggregate_counts: empty forecast");
  if (how == Aggregation::kMax) return *std::max_element(horizon_counts.begin(), horizon_counts.end());
  return std::accumulate(horizon_counts.begin(), horizon_counts.end(), 0.0) /
         static_cast<double>(horizon_counts.size());
}

RegionDemand demand_from_prediction(int region_id, double predicted_users, const TaskStats& stats, double omega,
                                    const core::EconomicParams& econ, const core::RadioParams& radio,
                                    double vm_freq_hz) {
  if (!(omega > 0.0 && omega < 1.0)) throw std::invalid_argument("delay ratio must lie in (0, 1)");
  if (predicted_users < 0.0) throw std::invalid_argument("predicted users must be non-negative");
  if (!(vm_freq_hz > 0.0)) throw std::domain_error("vm frequency must be positive");
  const double se = core::spectral_efficiency(stats.mean_distance_m, radio);
  const double load_bits = predicted_users * stats.mean_data_bits;
  RegionDemand d;
  d.region_id = region_id;
  d.predicted_users = predicted_users;
  d.mean_data_bits = stats.mean_data_bits;
  d.mean_density = stats.mean_density;
  d.delay_ratio = omega;
  d.bandwidth_req_hz = load_bits / (omega * econ.max_delay_s * se);
  d.vm_req = load_bits * stats.mean_density / ((1.0 - omega) * econ.max_delay_s * vm_freq_hz);
  return d;
}

TierMix solve_tier_lp(double demand, std::span<const double> tiers, std::span<const double> costs) {
  check_tiers(tiers, costs);
  const std::size_t n = tiers.size();
  TierMix mix;
  mix.weights.assign(n, 0.0);
  if (demand > tiers.back()) {
    mix.weights.back() = 1.0;
    mix.cost = costs.back();
    mix.over_demand = true;
    return mix;
  }

  struct Candidate {
    std::size_t lo, hi;
    double upper_weight;
    double cost;
  };
  auto better = [](const Candidate& a, const Candidate& b) {
    const double tol = kTieTolerance * std::max(1.0, std::abs(b.cost));
    if (a.cost < b.cost - tol) return true;
    if (a.cost > b.cost + tol) return false;
    const std::size_t wa = a.hi - a.lo, wb = b.hi - b.lo;
    if (wa != wb) return wa < wb;
    return a.lo < b.lo;
  };

  bool found = false;
  Candidate best{};
  auto offer = [&](const Candidate& c) {
    if (!found || better(c, best)) {
      best = c;
      found = true;
    }
  };
  for (std::size_t k = 0; k < n; ++k) {
    if (tiers[k] >= demand) offer({k, k, 1.0, costs[k]});
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(tiers[i] < demand)) break;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!(tiers[j] > demand)) continue;
      const double lam = (demand - tiers[i]) / (tiers[j] - tiers[i]);
      offer({i, j, lam, (1.0 - lam) * costs[i] + lam * costs[j]});
    }
  }
  if (best.lo == best.hi) {
    mix.weights[best.lo] = 1.0;
  } else {
    mix.weights[best.lo] = 1.0 - best.upper_weight;
    mix.weights[best.hi] = best.upper_weight;
  }
  mix.cost = best.cost;
  return mix;
}

FractionalDecision solve_relaxed_lp(const RegionDemand& demand, const core::SliceCatalog& catalog) {
  catalog.validate();
  const auto bw = solve_tier_lp(demand.bandwidth_req_hz, catalog.bandwidth_tiers_hz, catalog.bandwidth_costs);
  const auto vm = solve_tier_lp(demand.vm_req, catalog.vm_tiers, catalog.vm_costs);
  return {catalog.region_id, bw.weights, vm.weights, bw.over_demand, vm.over_demand};
}

double lp_cost(const FractionalDecision& fractional, const core::SliceCatalog& catalog) {
  if (fractional.bandwidth_weights.size() != catalog.bandwidth_costs.size() ||
      fractional.vm_weights.size() != catalog.vm_costs.size()) {
    throw core::ContractViolation("fractional decision does not match catalog");
  }
  return weighted_cost(fractional.bandwidth_weights, catalog.bandwidth_costs) +
         weighted_cost(fractional.vm_weights, catalog.vm_costs);
}

core::SliceDecision random_round(const FractionalDecision& fractional, std::mt19937_64& rng) {
  fractional.validate();
  core::SliceDecision d;
  d.region_id = fractional.region_id;
  d.bandwidth_choice.assign(fractional.bandwidth_weights.size(), 0);
  d.vm_choice.assign(fractional.vm_weights.size(), 0);
  d.bandwidth_choice[kernels::draw_tier(fractional.bandwidth_weights, uniform01(rng))] = 1;
  d.vm_choice[kernels::draw_tier(fractional.vm_weights, uniform01(rng))] = 1;
  return d;
}

BruteForceResult brute_force_tier(double demand, std::span<const double> tiers, std::span<const double> costs) {
  check_tiers(tiers, costs);
  if (tiers.size() > 64) throw std::invalid_argument("brute force limited to 64 tiers");
  BruteForceResult best{tiers.size() - 1, costs.back(), false};
  for (std::size_t k = 0; k < tiers.size(); ++k) {
    if (tiers[k] >= demand && (!best.feasible || costs[k] < best.cost)) best = {k, costs[k], true};
  }
  return best;
}

BruteForceDecision brute_force_optimal(const RegionDemand& demand, const core::SliceCatalog& catalog) {
  catalog.validate();
  const auto bw = brute_force_tier(demand.bandwidth_req_hz, catalog.bandwidth_tiers_hz, catalog.bandwidth_costs);
  const auto vm = brute_force_tier(demand.vm_req, catalog.vm_tiers, catalog.vm_costs);
  return {core::SliceDecision::from_indices(catalog, bw.index, vm.index), bw.cost + vm.cost,
          bw.feasible && vm.feasible};
}

double chernoff_envelope(double epsilon, double mu) {
  if (!(epsilon > 0.0) || mu < 0.0) throw std::invalid_argument("chernoff_envelope: need eps > 0, mu >= 0");
  return std::exp(-epsilon * epsilon * mu / (2.0 + epsilon));
}

double chernoff_mu(double lp_sum, std::size_t regions, double max_value) {
  if (regions == 0 || !(max_value > 0.0)) throw std::invalid_argument("chernoff_mu: bad normalizer");
  return lp_sum / (static_cast<double>(regions) * max_value);
}

std::vector<std::vector<double>> PredictorForecaster::forecast(const traffic::TrafficSeries& history,
                                                               std::size_t end_slot, int horizon) {
  if (horizon != model_.config().horizon_slots) throw std::invalid_argument("forecast horizon mismatch");
  const auto f = predictor::predict(model_, history, end_slot);
  std::vector<std::vector<double>> out;
  for (const auto& row : f.counts) out.emplace_back(row.begin(), row.end());
  return out;
}

std::vector<std::vector<double>> NaiveForecaster::forecast(const traffic::TrafficSeries& history,
                                                           std::size_t end_slot, int horizon) {
  if (end_slot == 0 || end_slot > history.length()) throw std::invalid_argument("naive forecast: no history");
  std::vector<std::vector<double>> out;
  for (const auto& row : history.counts) {
    out.push_back(predictor::naive_predict(std::span<const int>(row.data(), end_slot), kind_, horizon,
                                           static_cast<int>(std::min<std::size_t>(end_slot, window_))));
  }
  return out;
}

std::string NaiveForecaster::name() const {
  return kind_ == predictor::NaiveKind::kLastValue ? "naive_last" : "naive_mean";
}

std::vector<std::vector<double>> OracleForecaster::forecast(const traffic::TrafficSeries& history,
                                                            std::size_t end_slot, int horizon) {
  if (end_slot + static_cast<std::size_t>(horizon) > history.length()) {
    throw std::invalid_argument("oracle forecast: future not available");
  }
  std::vector<std::vector<double>> out;
  for (const auto& row : history.counts) {
    out.emplace_back(row.begin() + static_cast<std::ptrdiff_t>(end_slot),
                     row.begin() + static_cast<std::ptrdiff_t>(end_slot) + horizon);
  }
  return out;
}

SliceAdjustment slices_for_users(std::span<const double> users, int long_slot, std::span<const TaskStats> stats,
                                 std::span<const core::SliceCatalog> catalogs, const SlicerConfig& config,
                                 const core::EconomicParams& econ, const core::RadioParams& radio,
                                 std::mt19937_64& rng) {
  if (users.size() != catalogs.size() || stats.size() != catalogs.size() ||
      config.omega.size() != catalogs.size()) {
    throw std::invalid_argument("slices_for_users: per-region inputs differ in length");
  }
  SliceAdjustment out;
  for (std::size_t r = 0; r < catalogs.size(); ++r) {
    const auto& cat = catalogs[r];
    const auto demand =
        demand_from_prediction(cat.region_id, users[r], stats[r], config.omega[r], econ, radio, cat.vm_freq_hz);
    const auto frac = solve_relaxed_lp(demand, cat);
    auto decision = random_round(frac, rng);
    out.diagnostics.push_back(diagnose(long_slot, demand, frac, decision, cat));
    out.decisions.push_back(std::move(decision));
  }
  return out;
}

SliceAdjustment adjust_slices(Forecaster& forecaster, const traffic::TrafficSeries& history, std::size_t end_slot,
                              int long_slot, std::span<const TaskStats> stats,
                              std::span<const core::SliceCatalog> catalogs, const SlicerConfig& config,
                              const core::EconomicParams& econ, const core::RadioParams& radio,
                              std::mt19937_64& rng) {
  if (history.regions() != catalogs.size()) throw std::invalid_argument("adjust_slices: region count mismatch");
  const auto f = forecaster.forecast(history, end_slot, econ.short_slots_per_long);
  std::vector<double> users;
  for (const auto& row : f) users.push_back(aggregate_counts(row, config.aggregation));
  return slices_for_users(users, long_slot, stats, catalogs, config, econ, radio, rng);
}

void write_diagnostics(std::span<const SliceDiagnostics> rows, const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << "long_slot,region,predicted_N,B_req,V_req,lp_cost,rounded_cost,bandwidth_tier,vm_tier,over_demand\n";
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.long_slot << ',' << r.region_id << ',' << r.predicted_users << ',' << r.bandwidth_req_hz << ','
        << r.vm_req << ',' << r.lp_cost << ',' << r.rounded_cost << ',' << r.bandwidth_tier << ',' << r.vm_tier
        << ',' << (r.over_demand ? 1 : 0) << '\n';
  }
}

}  // namespace edgeslice::slicer
