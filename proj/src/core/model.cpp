#include "edgeslice/core/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace edgeslice::core {

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
double linear_to_db(double linear) { return 10.0 * std::log10(linear); }
double dbm_to_mw(double dbm) { return db_to_linear(dbm); }
double mw_to_dbm(double mw) { return linear_to_db(mw); }

RadioParams RadioParams::from_decibels(double upload_power_mw, double gain_ref_db,
                                       double noise_power_dbm, double path_loss_exp) {
  RadioParams r;
  r.upload_power_mw = upload_power_mw;
  r.gain_ref = db_to_linear(gain_ref_db);
  r.noise_power_mw = dbm_to_mw(noise_power_dbm);
  r.path_loss_exp = path_loss_exp;
  r.validate();
  return r;
}

void RadioParams::validate() const {
  if (!(upload_power_mw > 0 && noise_power_mw > 0 && gain_ref > 0 && path_loss_exp >= 1.0)) {
    throw std::invalid_argument("RadioParams: powers and gain must be positive, path loss exponent >= 1");
  }
}

void TaskSpec::validate() const {
  if (!(data_bits > 0)) throw std::invalid_argument("TaskSpec: data_bits must be positive");
  if (!(density_cycles_per_bit >= 0)) throw std::invalid_argument("TaskSpec: density must be >= 0");
  if (priority < 1 || priority > 3) throw std::invalid_argument("TaskSpec: priority must be 1, 2 or 3");
  if (!(distance_m >= 1.0)) throw std::invalid_argument("TaskSpec: distance must be >= 1 m");
}

namespace {

void check_tier_list(const std::vector<double>& tiers, const std::vector<double>& costs,
                     const char* what) {
  if (tiers.empty() || tiers.size() != costs.size()) {
    throw std::invalid_argument(std::string("SliceCatalog: ") + what +
                                " tiers and costs must be non-empty and equal length");
  }
  for (std::size_t k = 0; k < tiers.size(); ++k) {
    if (k > 0 && !(tiers[k] > tiers[k - 1])) {
      throw std::invalid_argument(std::string("SliceCatalog: ") + what + " tiers must be strictly ascending");
    }
    if (!(costs[k] > 0)) {
      throw std::invalid_argument(std::string("SliceCatalog: ") + what + " costs must be positive");
    }
  }
}

}  // namespace

void SliceCatalog::validate() const {
  check_tier_list(bandwidth_tiers_hz, bandwidth_costs, "bandwidth");
  check_tier_list(vm_tiers, vm_costs, "vm");
  if (!(vm_freq_hz > 0)) throw std::invalid_argument("SliceCatalog: vm frequency must be positive");
}

SliceDecision SliceDecision::from_indices(const SliceCatalog& catalog, std::size_t bandwidth_index,
                                          std::size_t vm_index) {
  if (bandwidth_index >= catalog.bandwidth_tiers_hz.size() || vm_index >= catalog.vm_tiers.size()) {
    throw ContractViolation("SliceDecision: tier index out of range");
  }
  SliceDecision d;
  d.region_id = catalog.region_id;
  d.bandwidth_choice.assign(catalog.bandwidth_tiers_hz.size(), 0);
  d.vm_choice.assign(catalog.vm_tiers.size(), 0);
  d.bandwidth_choice[bandwidth_index] = 1;
  d.vm_choice[vm_index] = 1;
  return d;
}

std::size_t SliceDecision::selected(std::span<const std::uint8_t> one_hot) {
  std::size_t index = one_hot.size();
  for (std::size_t k = 0; k < one_hot.size(); ++k) {
    if (one_hot[k] > 1) throw ContractViolation("one-hot entry outside {0,1}");
    if (one_hot[k] == 1) {
      if (index != one_hot.size()) throw ContractViolation("one-hot vector has more than one set entry");
      index = k;
    }
  }
  if (index == one_hot.size()) throw ContractViolation("one-hot vector has no set entry");
  return index;
}

void SliceDecision::validate(const SliceCatalog& catalog) const {
  if (region_id != catalog.region_id) throw ContractViolation("SliceDecision: region mismatch");
  if (bandwidth_choice.size() != catalog.bandwidth_tiers_hz.size() ||
      vm_choice.size() != catalog.vm_tiers.size()) {
    throw ContractViolation("SliceDecision: one-hot length does not match the catalog");
  }
  selected(bandwidth_choice);
  selected(vm_choice);
}

double VmQueue::backlog_cycles() const {
  double total = 0.0;
  for (const auto& t : pending) total += t.remaining_cycles;
  return total;
}

double VmQueue::drain(double cycles) {
  double consumed = 0.0;
  while (!pending.empty() && cycles > 0.0) {
    auto& head = pending.front();
    const double take = std::min(head.remaining_cycles, cycles);
    head.remaining_cycles -= take;
    cycles -= take;
    consumed += take;
    if (head.remaining_cycles <= 0.0) pending.pop_front();
  }
  return consumed;
}

void EconomicParams::validate() const {
  if (!(reward_per_task > 0)) throw std::invalid_argument("EconomicParams: reward must be positive");
  if (!(max_delay_s > 0)) throw std::invalid_argument("EconomicParams: max delay must be positive");
  if (long_slots < 1 || short_slots_per_long < 1) {
    throw std::invalid_argument("EconomicParams: slot counts must be >= 1");
  }
}

double channel_gain(double distance_m, const RadioParams& radio) {
  return radio.gain_ref * std::pow(distance_m, -radio.path_loss_exp);
}

double snr(double distance_m, const RadioParams& radio) {
  return radio.upload_power_mw * channel_gain(distance_m, radio) / radio.noise_power_mw;
}

double spectral_efficiency(double distance_m, const RadioParams& radio) {
  return std::log2(1.0 + snr(distance_m, radio));
}

double upload_rate(double bandwidth_hz, double distance_m, const RadioParams& radio) {
  if (bandwidth_hz < 0) throw std::domain_error("upload_rate: negative bandwidth");
  if (!(distance_m >= 1.0)) throw std::domain_error("upload_rate: distance below 1 m");
  if (bandwidth_hz == 0.0) return 0.0;
  return bandwidth_hz * spectral_efficiency(distance_m, radio);
}

double upload_time(const TaskSpec& task, double rate_bits_per_s) {
  if (rate_bits_per_s < 0) throw std::domain_error("upload_time: negative rate");
  if (task.data_bits <= 0.0) return 0.0;
  if (rate_bits_per_s == 0.0) return kInfiniteTime;
  return task.data_bits / rate_bits_per_s;
}

double exec_time(const TaskSpec& task, double vm_freq_hz) {
  if (!(vm_freq_hz > 0)) throw std::domain_error("exec_time: frequency must be positive");
  return task.cycles() / vm_freq_hz;
}

double queue_time(const VmQueue& queue, double vm_freq_hz) {
  if (!(vm_freq_hz > 0)) throw std::domain_error("queue_time: frequency must be positive");
  double seconds = 0.0;
  for (const auto& t : queue.pending) seconds += t.remaining_cycles / vm_freq_hz;
  return seconds;
}

double total_time(double upload_s, double queue_s, double exec_s) {
  return upload_s + queue_s + exec_s;
}

double task_revenue(double total_s, const EconomicParams& econ, int priority) {
  if (priority < 1 || priority > 3) throw std::invalid_argument("task_revenue: priority must be 1, 2 or 3");
  return total_s <= econ.max_delay_s ? econ.reward_per_task * priority : 0.0;
}

RentedResources rented_resources(const SliceDecision& decision, const SliceCatalog& catalog) {
  decision.validate(catalog);
  return {catalog.bandwidth_tiers_hz[decision.bandwidth_index()], catalog.vm_tiers[decision.vm_index()]};
}

double region_cost(const SliceDecision& decision, const SliceCatalog& catalog) {
  decision.validate(catalog);
  return catalog.bandwidth_costs[decision.bandwidth_index()] + catalog.vm_costs[decision.vm_index()];
}

double renting_cost(std::span<const SliceDecision> decisions, std::span<const SliceCatalog> catalogs) {
  if (decisions.size() != catalogs.size()) {
    throw ContractViolation("renting_cost: need exactly one decision per region");
  }
  double total = 0.0;
  for (const auto& d : decisions) {
    auto it = std::find_if(catalogs.begin(), catalogs.end(),
                           [&](const SliceCatalog& c) { return c.region_id == d.region_id; });
    if (it == catalogs.end()) throw ContractViolation("renting_cost: decision for unknown region");
    total += region_cost(d, *it);
  }
  return total;
}

double profit(std::span<const double> revenues, std::span<const double> costs) {
  if (revenues.size() != costs.size()) throw std::invalid_argument("profit: revenue/cost length mismatch");
  double total = 0.0;
  for (std::size_t h = 0; h < revenues.size(); ++h) total += revenues[h] - costs[h];
  return total;
}

}  // namespace edgeslice::core
