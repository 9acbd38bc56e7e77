#pragma once

// Communication, computation and economic model of one multi-edge system.
//
// Every function here is a pure function of its arguments. Quantities are SI
// (Hz, bits, seconds, meters) except power, which stays in milliwatts because
// only the ratio p*g/sigma^2 enters the rate formula.

#include <cstdint>
#include <deque>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace edgeslice::core {

/// Raised when a caller breaks a documented precondition on structured input
/// (malformed one-hot vectors, mismatched regions, off-schedule calls).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline constexpr double kInfiniteTime = std::numeric_limits<double>::infinity();
inline constexpr double kBitsPerKilobyte = 8000.0;

double db_to_linear(double db);
double linear_to_db(double linear);
/// dBm -> mW.
double dbm_to_mw(double dbm);
double mw_to_dbm(double mw);

struct RadioParams {
  double upload_power_mw = 100.0;
  double noise_power_mw = 1e-11;  // linear
  double gain_ref = 1e-6;         // linear
  double path_loss_exp = 2.0;

  /// Converts the decibel quantities once; the stored fields are linear.
  static RadioParams from_decibels(double upload_power_mw, double gain_ref_db,
                                   double noise_power_dbm, double path_loss_exp);
  void validate() const;
};

struct TaskSpec {
  double data_bits = 0.0;
  double density_cycles_per_bit = 0.0;
  int priority = 1;
  double distance_m = 1.0;

  void validate() const;
  double cycles() const { return data_bits * density_cycles_per_bit; }
};

struct SliceCatalog {
  int region_id = 0;
  std::vector<double> bandwidth_tiers_hz;
  std::vector<double> bandwidth_costs;
  std::vector<double> vm_tiers;
  std::vector<double> vm_costs;
  double vm_freq_hz = 2.0e9;

  void validate() const;
};

/// One-hot renting choice for one region.
struct SliceDecision {
  int region_id = 0;
  std::vector<std::uint8_t> bandwidth_choice;
  std::vector<std::uint8_t> vm_choice;

  static SliceDecision from_indices(const SliceCatalog& catalog, std::size_t bandwidth_index,
                                    std::size_t vm_index);
  /// Index of the single set entry; throws ContractViolation unless the vector is one-hot.
  static std::size_t selected(std::span<const std::uint8_t> one_hot);
  std::size_t bandwidth_index() const { return selected(bandwidth_choice); }
  std::size_t vm_index() const { return selected(vm_choice); }
  void validate(const SliceCatalog& catalog) const;

  bool operator==(const SliceDecision&) const = default;
};

struct QueuedTask {
  double remaining_cycles = 0.0;
  std::uint64_t arrival = 0;
};

/// FIFO backlog of one VM.
struct VmQueue {
  std::deque<QueuedTask> pending;

  void push(double cycles, std::uint64_t arrival) { pending.push_back({cycles, arrival}); }
  double backlog_cycles() const;
  /// Processes up to `cycles` of work in FIFO order; returns the cycles actually consumed.
  double drain(double cycles);
  bool empty() const { return pending.empty(); }
};

struct EconomicParams {
  double reward_per_task = 1.0;
  double max_delay_s = 1.0;
  int long_slots = 24;
  int short_slots_per_long = 6;

  void validate() const;
};

struct RentedResources {
  double bandwidth_hz = 0.0;
  double vm_count = 0.0;
};

double channel_gain(double distance_m, const RadioParams& radio);
double snr(double distance_m, const RadioParams& radio);
double spectral_efficiency(double distance_m, const RadioParams& radio);

double upload_rate(double bandwidth_hz, double distance_m, const RadioParams& radio);
double upload_time(const TaskSpec& task, double rate_bits_per_s);
double exec_time(const TaskSpec& task, double vm_freq_hz);
double queue_time(const VmQueue& queue, double vm_freq_hz);
double total_time(double upload_s, double queue_s, double exec_s);
double task_revenue(double total_s, const EconomicParams& econ, int priority);

RentedResources rented_resources(const SliceDecision& decision, const SliceCatalog& catalog);
/// Cost of one region's decision (one long slot).
double region_cost(const SliceDecision& decision, const SliceCatalog& catalog);
/// Cost of all regions in one long slot; decisions are matched to catalogs by region id.
double renting_cost(std::span<const SliceDecision> decisions, std::span<const SliceCatalog> catalogs);
/// Sum over long slots of revenue minus cost.
double profit(std::span<const double> revenues, std::span<const double> costs);

}  // namespace edgeslice::core
