#include "edgeslice/env/offload_env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <stdexcept>

namespace edgeslice::env {

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void EnvConfig::validate() const {
  if (catalogs.empty()) throw std::invalid_argument("EnvConfig: no regions");
  if (task_ranges.size() != catalogs.size()) throw std::invalid_argument("EnvConfig: task ranges per region");
  for (const auto& c : catalogs) c.validate();
  for (const auto& t : task_ranges) {
    if (!(t.data_kb_lo > 0 && t.data_kb_hi >= t.data_kb_lo && t.density_lo >= 0 && t.density_hi >= t.density_lo)) {
      throw std::invalid_argument("EnvConfig: bad task ranges");
    }
  }
  if (!(distance_lo_m >= 1.0 && distance_hi_m >= distance_lo_m)) throw std::invalid_argument("EnvConfig: distance");
  if (priorities.empty()) throw std::invalid_argument("EnvConfig: no priorities");
  for (int p : priorities) {
    if (p < 1 || p > 3) throw std::invalid_argument("EnvConfig: priority outside {1,2,3}");
  }
  if (n_max < 1) throw std::invalid_argument("EnvConfig: n_max must be positive");
  if (!(slot_duration_s > 0)) throw std::invalid_argument("EnvConfig: slot duration");
  radio.validate();
  econ.validate();
}

std::vector<double> EnvConfig::observation_scale() const {
  double max_bw = 0, max_vm = 0, max_bits = 0, max_density = 0;
  for (const auto& c : catalogs) {
    max_bw = std::max(max_bw, c.bandwidth_tiers_hz.back());
    max_vm = std::max(max_vm, c.vm_tiers.back());
  }
  for (const auto& t : task_ranges) {
    max_bits = std::max(max_bits, t.data_kb_hi * core::kBitsPerKilobyte);
    max_density = std::max(max_density, t.density_hi);
  }
  const double uplink = max_bits * distance_hi_m / econ.max_delay_s;
  const double compute = max_bits * std::max(max_density, 1.0) / econ.max_delay_s;
  std::vector<double> s;
  s.push_back(1.0 / max_bw);
  s.push_back(1.0 / max_vm);
  s.push_back(1.0 / n_max);
  s.insert(s.end(), static_cast<std::size_t>(n_max), 1.0 / uplink);
  s.insert(s.end(), static_cast<std::size_t>(n_max), 1.0 / compute);
  s.insert(s.end(), static_cast<std::size_t>(n_max), 1.0 / 3.0);
  return s;
}

DayTasks sample_day(const EnvConfig& config, const traffic::TrafficSeries& traffic, int day, std::uint64_t seed) {
  config.validate();
  if (traffic.regions() != config.regions()) throw std::invalid_argument("sample_day: traffic region count");
  const int slots = config.slots_per_day();
  const auto begin = static_cast<std::size_t>(day) * static_cast<std::size_t>(slots);
  if (day < 0 || begin + static_cast<std::size_t>(slots) > traffic.length()) {
    throw std::out_of_range("sample_day: day outside the traffic series");
  }
  std::mt19937_64 rng(mix(seed, static_cast<std::uint64_t>(day)));
  DayTasks out;
  out.day = day;
  out.tasks.resize(static_cast<std::size_t>(slots));
  for (int s = 0; s < slots; ++s) {
    auto& slot = out.tasks[static_cast<std::size_t>(s)];
    slot.resize(config.regions());
    for (std::size_t r = 0; r < config.regions(); ++r) {
      const int n = traffic.counts[r][begin + static_cast<std::size_t>(s)];
      if (n > config.n_max) throw std::invalid_argument("sample_day: user count exceeds n_max");
      const auto& range = config.task_ranges[r];
      for (int j = 0; j < n; ++j) {
        core::TaskSpec t;
        t.data_bits = uniform(rng, range.data_kb_lo, range.data_kb_hi) * core::kBitsPerKilobyte;
        t.density_cycles_per_bit = uniform(rng, range.density_lo, range.density_hi);
        t.priority = config.priorities[rng() % config.priorities.size()];
        t.distance_m = uniform(rng, config.distance_lo_m, config.distance_hi_m);
        slot[r].push_back(t);
      }
    }
  }
  return out;
}

std::vector<core::TaskSpec> long_slot_tasks(const DayTasks& day, int long_slot, std::size_t region,
                                            int short_slots_per_long) {
  std::vector<core::TaskSpec> out;
  for (int t = 0; t < short_slots_per_long; ++t) {
    const auto s = static_cast<std::size_t>(long_slot * short_slots_per_long + t);
    if (s >= day.tasks.size()) break;
    const auto& v = day.tasks[s].at(region);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

std::vector<double> RegionSnapshot::to_vector() const {
  std::vector<double> v{rented_bandwidth_hz, rented_vm_count, static_cast<double>(user_count)};
  v.insert(v.end(), uplink_terms.begin(), uplink_terms.end());
  v.insert(v.end(), compute_terms.begin(), compute_terms.end());
  v.insert(v.end(), priorities.begin(), priorities.end());
  return v;
}

ActionVector ActionVector::from_vector(std::span<const double> raw, int n_max) {
  if (raw.size() != static_cast<std::size_t>(2 * n_max)) throw std::invalid_argument("action size mismatch");
  ActionVector a;
  a.bandwidth_fractions.assign(raw.begin(), raw.begin() + n_max);
  a.vm_selectors.assign(raw.begin() + n_max, raw.end());
  return a;
}

std::vector<double> ActionVector::to_vector() const {
  std::vector<double> v(bandwidth_fractions);
  v.insert(v.end(), vm_selectors.begin(), vm_selectors.end());
  return v;
}

OffloadEnv::OffloadEnv(EnvConfig config) : config_(std::move(config)) { config_.validate(); }

bool OffloadEnv::at_long_slot_boundary() const {
  return region_ == 0 && slot_ % config_.econ.short_slots_per_long == 0;
}

RegionSnapshot OffloadEnv::reset(DayTasks day, SlicePlan plan) {
  if (day.tasks.size() != static_cast<std::size_t>(config_.slots_per_day())) {
    throw std::invalid_argument("reset: day does not match the slot hierarchy");
  }
  if (plan.size() == 1) plan.resize(static_cast<std::size_t>(config_.econ.long_slots), plan.front());
  if (plan.size() != static_cast<std::size_t>(config_.econ.long_slots)) {
    throw std::invalid_argument("reset: plan must have one entry per long slot");
  }
  for (const auto& slot : plan) {
    if (slot.size() != config_.regions()) throw std::invalid_argument("reset: plan region count");
    for (std::size_t r = 0; r < slot.size(); ++r) {
      if (slot[r].region_id != config_.catalogs[r].region_id) throw core::ContractViolation("reset: region id");
      slot[r].validate(config_.catalogs[r]);
    }
  }
  day_ = std::move(day);
  plan_ = std::move(plan);
  queues_.assign(config_.regions(), {});
  rented_.assign(config_.regions(), {});
  slot_ = 0;
  region_ = 0;
  arrivals_ = 0;
  trace_.clear();
  install(0);
  current_ = snapshot(0, 0);
  return current_;
}

void OffloadEnv::resize_queues(std::size_t region, std::size_t vm_count) {
  auto& qs = queues_[region];
  if (qs.size() == vm_count) return;
  std::vector<core::QueuedTask> pending;
  for (auto& q : qs) pending.insert(pending.end(), q.pending.begin(), q.pending.end());
  std::stable_sort(pending.begin(), pending.end(),
                   [](const core::QueuedTask& a, const core::QueuedTask& b) { return a.arrival < b.arrival; });
  qs.assign(vm_count, {});
  for (std::size_t k = 0; k < pending.size(); ++k) qs[k % vm_count].pending.push_back(pending[k]);
}

void OffloadEnv::install(int long_slot) {
  const auto& decisions = plan_.at(static_cast<std::size_t>(long_slot));
  for (std::size_t r = 0; r < config_.regions(); ++r) {
    rented_[r] = core::rented_resources(decisions[r], config_.catalogs[r]);
    resize_queues(r, static_cast<std::size_t>(std::llround(rented_[r].vm_count)));
  }
}

void OffloadEnv::apply_slice_change(const std::vector<core::SliceDecision>& decisions) {
  if (done() || !at_long_slot_boundary()) {
    throw core::ContractViolation("apply_slice_change: only legal at a long-slot boundary");
  }
  if (decisions.size() != config_.regions()) throw std::invalid_argument("apply_slice_change: region count");
  for (std::size_t r = 0; r < decisions.size(); ++r) decisions[r].validate(config_.catalogs[r]);
  const int h = slot_ / config_.econ.short_slots_per_long;
  plan_[static_cast<std::size_t>(h)] = decisions;
  install(h);
  current_ = snapshot(slot_, region_);
}

RegionSnapshot OffloadEnv::snapshot(int slot_of_day, std::size_t region) const {
  RegionSnapshot s;
  const auto n = static_cast<std::size_t>(config_.n_max);
  s.region_id = config_.catalogs.at(region).region_id;
  s.uplink_terms.assign(n, 0.0);
  s.compute_terms.assign(n, 0.0);
  s.priorities.assign(n, 0.0);
  if (slot_of_day >= config_.slots_per_day()) return s;
  const int h = slot_of_day / config_.econ.short_slots_per_long;
  const auto rented = core::rented_resources(plan_.at(static_cast<std::size_t>(h))[region], config_.catalogs[region]);
  s.rented_bandwidth_hz = rented.bandwidth_hz;
  s.rented_vm_count = rented.vm_count;
  const auto& tasks = day_.tasks.at(static_cast<std::size_t>(slot_of_day))[region];
  s.user_count = static_cast<int>(tasks.size());
  const double tmax = config_.econ.max_delay_s;
  for (std::size_t j = 0; j < tasks.size(); ++j) {
    s.uplink_terms[j] = tasks[j].data_bits * tasks[j].distance_m / tmax;
    s.compute_terms[j] = tasks[j].data_bits * tasks[j].density_cycles_per_bit / tmax;
    s.priorities[j] = tasks[j].priority;
  }
  return s;
}

DecodedAction OffloadEnv::decode_action(const ActionVector& raw, const RegionSnapshot& snapshot) const {
  const auto n = static_cast<std::size_t>(snapshot.user_count);
  if (raw.bandwidth_fractions.size() < n || raw.vm_selectors.size() < n) {
    throw std::invalid_argument("decode_action: action shorter than the active users");
  }
  DecodedAction d;
  d.bandwidth_hz.resize(n);
  d.vm_index.resize(n);
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) total += std::clamp(raw.bandwidth_fractions[j], 0.0, 1.0);
  const double norm = total > 1.0 ? total : 1.0;
  const auto vms = static_cast<std::size_t>(std::llround(snapshot.rented_vm_count));
  for (std::size_t j = 0; j < n; ++j) {
    d.bandwidth_hz[j] = std::clamp(raw.bandwidth_fractions[j], 0.0, 1.0) / norm * snapshot.rented_bandwidth_hz;
    const double x = std::clamp(raw.vm_selectors[j], 0.0, 1.0);
    d.vm_index[j] = vms == 0 ? 0 : std::min(static_cast<std::size_t>(std::floor(x * static_cast<double>(vms))), vms - 1);
  }
  // Rounding in the division can leave the sum a few ulp above the rented amount.
  if (n > 0) {
    double allocated = 0.0;
    for (double b : d.bandwidth_hz) allocated += b;
    if (allocated > snapshot.rented_bandwidth_hz) {
      auto& largest = *std::max_element(d.bandwidth_hz.begin(), d.bandwidth_hz.end());
      largest = std::max(0.0, largest - (allocated - snapshot.rented_bandwidth_hz));
    }
  }
  return d;
}

StepOutcome OffloadEnv::step(const ActionVector& action) {
  if (done()) throw std::logic_error("step: episode finished");
  const std::size_t r = region_;
  const int slot = slot_;
  const int per_long = config_.econ.short_slots_per_long;
  const auto& tasks = day_.tasks[static_cast<std::size_t>(slot)][r];
  const auto decoded = decode_action(action, current_);
  const auto& cat = config_.catalogs[r];
  auto& qs = queues_[r];

  StepOutcome out;
  auto& info = out.info;
  info.long_slot = slot / per_long;
  info.short_slot = slot % per_long;
  info.slot_of_day = slot;
  info.region = r;
  info.rented_bandwidth_s = rented_[r].bandwidth_hz * config_.slot_duration_s;
  info.rented_vm_s = rented_[r].vm_count * config_.slot_duration_s;
  for (std::size_t j = 0; j < tasks.size(); ++j) {
    const auto& task = tasks[j];
    TaskRecord rec;
    rec.user = static_cast<int>(j);
    rec.priority = task.priority;
    rec.bandwidth_hz = decoded.bandwidth_hz[j];
    rec.vm_index = decoded.vm_index[j];
    rec.upload_s = core::upload_time(task, core::upload_rate(rec.bandwidth_hz, task.distance_m, config_.radio));
    rec.queue_s = core::queue_time(qs[rec.vm_index], cat.vm_freq_hz);
    rec.exec_s = core::exec_time(task, cat.vm_freq_hz);
    qs[rec.vm_index].push(task.cycles(), arrivals_++);
    rec.total_s = core::total_time(rec.upload_s, rec.queue_s, rec.exec_s);
    rec.revenue = core::task_revenue(rec.total_s, config_.econ, task.priority);
    out.reward += rec.revenue;
    if (std::isfinite(rec.upload_s)) info.used_bandwidth_s += rec.bandwidth_hz * rec.upload_s;
    info.used_vm_s += rec.exec_s;
    if (trace_on_) trace_.push_back({day_.day, info.long_slot, info.short_slot, cat.region_id, rec});
    info.tasks.push_back(rec);
  }

  if (++region_ == config_.regions()) {
    region_ = 0;
    for (std::size_t q = 0; q < queues_.size(); ++q) {
      const double budget = config_.catalogs[q].vm_freq_hz * config_.slot_duration_s;
      for (auto& vm : queues_[q]) vm.drain(budget);
    }
    ++slot_;
    if (!done() && slot_ % per_long == 0) install(slot_ / per_long);
  }
  out.terminal = slot + 1 >= config_.slots_per_day();
  out.next = snapshot(slot + 1, r);
  if (!done()) current_ = snapshot(slot_, region_);
  return out;
}

void write_trace(std::span<const TraceRow> rows, const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << "day,long_slot,short_slot,region,user,upload_s,queue_s,exec_s,total_s,revenue\n" << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.day << ',' << r.long_slot << ',' << r.short_slot << ',' << r.region << ',' << r.task.user << ','
        << r.task.upload_s << ',' << r.task.queue_s << ',' << r.task.exec_s << ',' << r.task.total_s << ','
        << r.task.revenue << '\n';
  }
}

}  // namespace edgeslice::env
