#pragma once

// Per-region, per-short-slot offloading environment. One episode is one day:
// the policy acts once per (short slot, region) with regions visited in
// catalog order, and every region is its own MDP sharing one policy.

#include "edgeslice/core/model.hpp"
#include "edgeslice/traffic/traffic.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace edgeslice::env {

/// Uniform sampling ranges of the task attributes of one region.
struct TaskRanges {
  double data_kb_lo = 100.0;
  double data_kb_hi = 300.0;
  double density_lo = 400.0;
  double density_hi = 600.0;
};

struct EnvConfig {
  std::vector<core::SliceCatalog> catalogs;
  std::vector<TaskRanges> task_ranges;
  double distance_lo_m = 1.0;
  double distance_hi_m = 2000.0;
  std::vector<int> priorities{1, 2, 3};
  core::RadioParams radio;
  core::EconomicParams econ;
  int n_max = 10;
  double slot_duration_s = traffic::kDefaultSlotSeconds;

  void validate() const;
  std::size_t regions() const { return catalogs.size(); }
  int slots_per_day() const { return econ.long_slots * econ.short_slots_per_long; }
  int state_dim() const { return 3 + 3 * n_max; }
  int action_dim() const { return 2 * n_max; }
  /// Per-component multipliers bringing the raw state to roughly unit scale.
  std::vector<double> observation_scale() const;
};

/// Tasks of one day: [short slot of day][region][user].
struct DayTasks {
  int day = 0;
  std::vector<std::vector<std::vector<core::TaskSpec>>> tasks;
};

/// Samples every task of `day`; user counts come from `traffic`. Deterministic per seed.
DayTasks sample_day(const EnvConfig& config, const traffic::TrafficSeries& traffic, int day, std::uint64_t seed);

/// Tasks of one region during long slot `long_slot` of a sampled day.
std::vector<core::TaskSpec> long_slot_tasks(const DayTasks& day, int long_slot, std::size_t region,
                                            int short_slots_per_long);

/// Slice decisions per long slot: [long slot][region].
using SlicePlan = std::vector<std::vector<core::SliceDecision>>;

struct RegionSnapshot {
  int region_id = 0;
  double rented_bandwidth_hz = 0.0;
  double rented_vm_count = 0.0;
  int user_count = 0;
  std::vector<double> uplink_terms;   // d * l / T^max, zero padded
  std::vector<double> compute_terms;  // d * eta / T^max, zero padded
  std::vector<double> priorities;     // zero padded

  std::vector<double> to_vector() const;
};

struct ActionVector {
  std::vector<double> bandwidth_fractions;
  std::vector<double> vm_selectors;

  static ActionVector from_vector(std::span<const double> raw, int n_max);
  std::vector<double> to_vector() const;
};

struct DecodedAction {
  std::vector<double> bandwidth_hz;
  std::vector<std::size_t> vm_index;
};

struct TaskRecord {
  int user = 0;
  int priority = 1;
  double bandwidth_hz = 0.0;
  std::size_t vm_index = 0;
  double upload_s = 0.0;
  double queue_s = 0.0;
  double exec_s = 0.0;
  double total_s = 0.0;
  double revenue = 0.0;
};

struct StepInfo {
  int long_slot = 0;
  int short_slot = 0;  // within the long slot
  int slot_of_day = 0;
  std::size_t region = 0;
  std::vector<TaskRecord> tasks;
  double used_bandwidth_s = 0.0;  // Hz * s
  double used_vm_s = 0.0;
  double rented_bandwidth_s = 0.0;
  double rented_vm_s = 0.0;
};

struct StepOutcome {
  double reward = 0.0;
  RegionSnapshot next;
  bool terminal = false;  // last short slot of the day for this region
  StepInfo info;
};

struct TraceRow {
  int day = 0;
  int long_slot = 0;
  int short_slot = 0;
  int region = 0;
  TaskRecord task;
};

class OffloadEnv {
 public:
  explicit OffloadEnv(EnvConfig config);

  const EnvConfig& config() const { return config_; }

  RegionSnapshot reset(DayTasks day, SlicePlan plan);
  /// Snapshot of `region` at `slot_of_day` under the current plan.
  RegionSnapshot snapshot(int slot_of_day, std::size_t region) const;
  const RegionSnapshot& current() const { return current_; }
  std::size_t current_region() const { return region_; }
  int current_slot() const { return slot_; }
  bool done() const { return slot_ >= config_.slots_per_day(); }
  bool at_long_slot_boundary() const;

  DecodedAction decode_action(const ActionVector& raw, const RegionSnapshot& snapshot) const;
  StepOutcome step(const ActionVector& action);
  /// Replaces the decisions of the current long slot; only legal at a long-slot boundary.
  void apply_slice_change(const std::vector<core::SliceDecision>& decisions);

  const std::vector<core::VmQueue>& vm_queues(std::size_t region) const { return queues_.at(region); }
  const SlicePlan& plan() const { return plan_; }

  void enable_trace(bool on) { trace_on_ = on; }
  const std::vector<TraceRow>& trace() const { return trace_; }

 private:
  void install(int long_slot);
  void resize_queues(std::size_t region, std::size_t vm_count);

  EnvConfig config_;
  DayTasks day_;
  SlicePlan plan_;
  std::vector<std::vector<core::VmQueue>> queues_;
  std::vector<core::RentedResources> rented_;
  int slot_ = 0;
  std::size_t region_ = 0;
  std::uint64_t arrivals_ = 0;
  RegionSnapshot current_;
  bool trace_on_ = false;
  std::vector<TraceRow> trace_;
};

void write_trace(std::span<const TraceRow> rows, const std::filesystem::path& file);

}  // namespace edgeslice::env
