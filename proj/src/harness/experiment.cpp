#include "edgeslice/harness/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace edgeslice::harness {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::ofstream open_out(const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << std::setprecision(12);
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

int cap_users(int n_max, double multiplier) { return static_cast<int>(std::ceil(n_max * multiplier - 1e-9)); }

}  // namespace

// ---------------------------------------------------------------- config

void ExperimentConfig::validate() const {
  if (regions.empty()) throw std::invalid_argument("config: no regions");
  for (const auto& r : regions) {
    if (!(r.omega > 0.0 && r.omega < 1.0)) throw std::invalid_argument("config: omega must lie in (0,1)");
  }
  if (seeds.empty()) throw std::invalid_argument("config: seeds must be non-empty");
  if (eval_days.empty()) throw std::invalid_argument("config: eval_days must be non-empty");
  if (train_days < 2) throw std::invalid_argument("config: train_days must be at least 2");
  if (agent_episodes < 0) throw std::invalid_argument("config: agent_episodes must be non-negative");
  if (!(traffic.multiplier > 0.0)) throw std::invalid_argument("config: traffic multiplier must be positive");
  const auto& m = known_methods();
  if (std::find(m.begin(), m.end(), method) == m.end()) throw std::invalid_argument("config: unknown method " + method);
  for (const auto& [axis, values] : sweep_axes) {
    if (axis != "traffic_multiplier" && axis != "max_delay" && axis != "omega") {
      throw std::invalid_argument("config: unknown sweep axis " + axis);
    }
    (void)values;
  }
  slicer::aggregation_from_string(aggregation);
  predictor.validate();
  agent.validate();
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  nlohmann::json regions = nlohmann::json::array();
  for (const auto& r : c.regions) {
    regions.push_back({{"id", r.id},
                       {"bandwidth_tiers_mhz", r.bandwidth_tiers_mhz},
                       {"bandwidth_costs", r.bandwidth_costs},
                       {"vm_tiers", r.vm_tiers},
                       {"vm_costs", r.vm_costs},
                       {"data_kb", {r.data_kb_lo, r.data_kb_hi}},
                       {"density_cycles_per_bit", {r.density_lo, r.density_hi}},
                       {"omega", r.omega}});
  }
  const auto& t = c.traffic;
  j = nlohmann::json{
      {"scenario",
       {{"regions", regions},
        {"vm_freq_ghz", c.vm_freq_ghz},
        {"radio",
         {{"upload_power_mw", c.upload_power_mw},
          {"gain_ref_db", c.gain_ref_db},
          {"noise_power_dbm", c.noise_power_dbm},
          {"path_loss_exp", c.path_loss_exp}}},
        {"distance_m", {c.distance_lo_m, c.distance_hi_m}},
        {"priorities", c.priorities},
        {"reward_per_task", c.reward_per_task},
        {"max_delay_s", c.max_delay_s},
        {"long_slots", c.long_slots},
        {"short_slots_per_long", c.short_slots_per_long},
        {"n_max", c.n_max},
        {"slot_duration_s", c.slot_duration_s}}},
      {"traffic",
       {{"source", t.source},
        {"file", t.file},
        {"cells", t.cells},
        {"rescale", {t.rescale_lo, t.rescale_hi}},
        {"seed", t.seed},
        {"days", t.days},
        {"base", t.base},
        {"amplitude", t.amplitude},
        {"noise_sd", t.noise_sd},
        {"step_low", t.step_low},
        {"step_high", t.step_high},
        {"step_slot", t.step_slot},
        {"multiplier", t.multiplier}}},
      {"slicer", {{"aggregation", c.aggregation}}},
      {"predictor", c.predictor},
      {"agent", c.agent},
      {"agent_episodes", c.agent_episodes},
      {"train_days", c.train_days},
      {"eval_days", c.eval_days},
      {"method", c.method},
      {"seeds", c.seeds},
      {"sweep", c.sweep_axes},
      {"output_dir", c.output_dir},
      {"artifacts", {{"predictor", c.predictor_checkpoint}, {"agent", c.agent_checkpoint}}}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  ExperimentConfig d;
  c = d;
  const auto& s = j.at("scenario");
  c.regions.clear();
  for (const auto& r : s.at("regions")) {
    RegionSpec spec;
    spec.id = r.at("id").get<int>();
    spec.bandwidth_tiers_mhz = r.at("bandwidth_tiers_mhz").get<std::vector<double>>();
    spec.bandwidth_costs = r.at("bandwidth_costs").get<std::vector<double>>();
    spec.vm_tiers = r.at("vm_tiers").get<std::vector<double>>();
    spec.vm_costs = r.at("vm_costs").get<std::vector<double>>();
    const auto data = r.at("data_kb").get<std::vector<double>>();
    const auto density = r.at("density_cycles_per_bit").get<std::vector<double>>();
    if (data.size() != 2 || density.size() != 2) throw std::invalid_argument("config: ranges need two entries");
    spec.data_kb_lo = data[0];
    spec.data_kb_hi = data[1];
    spec.density_lo = density[0];
    spec.density_hi = density[1];
    spec.omega = r.value("omega", 0.3);
    c.regions.push_back(spec);
  }
  c.vm_freq_ghz = s.value("vm_freq_ghz", d.vm_freq_ghz);
  if (s.contains("radio")) {
    const auto& radio = s.at("radio");
    c.upload_power_mw = radio.value("upload_power_mw", d.upload_power_mw);
    c.gain_ref_db = radio.value("gain_ref_db", d.gain_ref_db);
    c.noise_power_dbm = radio.value("noise_power_dbm", d.noise_power_dbm);
    c.path_loss_exp = radio.value("path_loss_exp", d.path_loss_exp);
  }
  if (s.contains("distance_m")) {
    const auto dist = s.at("distance_m").get<std::vector<double>>();
    if (dist.size() != 2) throw std::invalid_argument("config: distance_m needs two entries");
    c.distance_lo_m = dist[0];
    c.distance_hi_m = dist[1];
  }
  c.priorities = s.value("priorities", d.priorities);
  c.reward_per_task = s.value("reward_per_task", d.reward_per_task);
  c.max_delay_s = s.value("max_delay_s", d.max_delay_s);
  c.long_slots = s.value("long_slots", d.long_slots);
  c.short_slots_per_long = s.value("short_slots_per_long", d.short_slots_per_long);
  c.n_max = s.value("n_max", d.n_max);
  c.slot_duration_s = s.value("slot_duration_s", d.slot_duration_s);

  if (j.contains("traffic")) {
    const auto& t = j.at("traffic");
    auto& o = c.traffic;
    o.source = t.value("source", o.source);
    o.file = t.value("file", o.file);
    o.cells = t.value("cells", o.cells);
    if (t.contains("rescale")) {
      const auto rs = t.at("rescale").get<std::vector<int>>();
      if (rs.size() != 2) throw std::invalid_argument("config: rescale needs two entries");
      o.rescale_lo = rs[0];
      o.rescale_hi = rs[1];
    }
    o.seed = t.value("seed", o.seed);
    o.days = t.value("days", o.days);
    o.base = t.value("base", o.base);
    o.amplitude = t.value("amplitude", o.amplitude);
    o.noise_sd = t.value("noise_sd", o.noise_sd);
    o.step_low = t.value("step_low", o.step_low);
    o.step_high = t.value("step_high", o.step_high);
    o.step_slot = t.value("step_slot", o.step_slot);
    o.multiplier = t.value("multiplier", o.multiplier);
  }
  if (j.contains("slicer")) c.aggregation = j.at("slicer").value("aggregation", d.aggregation);
  if (j.contains("predictor")) c.predictor = j.at("predictor").get<predictor::PredictorConfig>();
  if (j.contains("agent")) c.agent = j.at("agent").get<agent::AgentConfig>();
  c.agent_episodes = j.value("agent_episodes", d.agent_episodes);
  c.train_days = j.value("train_days", d.train_days);
  c.eval_days = j.value("eval_days", d.eval_days);
  c.method = j.value("method", d.method);
  c.seeds = j.value("seeds", d.seeds);
  c.sweep_axes = j.value("sweep", d.sweep_axes);
  c.output_dir = j.value("output_dir", d.output_dir);
  if (j.contains("artifacts")) {
    c.predictor_checkpoint = j.at("artifacts").value("predictor", "");
    c.agent_checkpoint = j.at("artifacts").value("agent", "");
  }
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read config " + file.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("config " + file.string() + " is not valid JSON: " + e.what());
  }
  auto c = j.get<ExperimentConfig>();
  c.validate();
  return c;
}

void save_config(const ExperimentConfig& config, const std::filesystem::path& file) {
  auto out = open_out(file);
  out << nlohmann::json(config).dump(2) << '\n';
}

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m{"sliceoff",   "static_off", "td3_no_distill", "ddpg",
                                          "naive_last", "naive_mean", "oracle"};
  return m;
}

// ---------------------------------------------------------------- scenario

traffic::TrafficSeries build_traffic(const ExperimentConfig& config) {
  const auto& t = config.traffic;
  const int regions = static_cast<int>(config.regions.size());
  const int per_day = config.long_slots * config.short_slots_per_long;
  traffic::TrafficSeries series;
  if (t.source == "synthetic") {
    series = traffic::synthesize(
        {.seed = t.seed, .regions = regions, .days = t.days, .base = t.base, .amplitude = t.amplitude,
         .noise_sd = t.noise_sd, .slots_per_day = per_day});
  } else if (t.source == "step") {
    series = traffic::synthesize_step(t.seed, regions, t.days, t.step_low, t.step_high, t.step_slot, t.noise_sd,
                                      per_day);
  } else if (t.source == "file") {
    std::ifstream probe(t.file);
    if (!probe) throw std::runtime_error("traffic file not found: " + t.file);
    std::string header;
    std::getline(probe, header);
    if (header.rfind("region_id,slot_index,count", 0) == 0) {
      series = traffic::read_canonical(t.file, config.slot_duration_s);
    } else {
      const auto raw = traffic::ingest_raw(t.file, t.cells);
      series = traffic::rescale(raw.series, t.rescale_lo, t.rescale_hi);
    }
    const std::size_t whole = series.length() / static_cast<std::size_t>(per_day) * static_cast<std::size_t>(per_day);
    series = traffic::slice(series, 0, whole);
  } else {
    throw std::invalid_argument("unknown traffic source: " + t.source);
  }
  if (series.regions() != config.regions.size()) throw std::invalid_argument("traffic region count mismatch");
  for (std::size_t r = 0; r < series.regions(); ++r) {
    series.region_ids[r] = config.regions[r].id;
    for (int& c : series.counts[r]) c = std::clamp(c, t.rescale_lo, t.rescale_hi);
  }
  series.slot_duration_s = config.slot_duration_s;
  series.validate(config.short_slots_per_long);
  return series;
}

Scenario build_scenario(const ExperimentConfig& config) {
  config.validate();
  Scenario s;
  auto& e = s.env;
  for (const auto& r : config.regions) {
    core::SliceCatalog c;
    c.region_id = r.id;
    for (double b : r.bandwidth_tiers_mhz) c.bandwidth_tiers_hz.push_back(b * 1e6);
    c.bandwidth_costs = r.bandwidth_costs;
    c.vm_tiers = r.vm_tiers;
    c.vm_costs = r.vm_costs;
    c.vm_freq_hz = config.vm_freq_ghz * 1e9;
    e.catalogs.push_back(c);
    e.task_ranges.push_back({r.data_kb_lo, r.data_kb_hi, r.density_lo, r.density_hi});
    s.slicer.omega.push_back(r.omega);
    s.cold_start.push_back({(r.data_kb_lo + r.data_kb_hi) / 2.0 * core::kBitsPerKilobyte,
                            (r.density_lo + r.density_hi) / 2.0, 1000.0});
  }
  e.distance_lo_m = config.distance_lo_m;
  e.distance_hi_m = config.distance_hi_m;
  e.priorities = config.priorities;
  e.radio = core::RadioParams::from_decibels(config.upload_power_mw, config.gain_ref_db, config.noise_power_dbm,
                                             config.path_loss_exp);
  e.econ = {config.reward_per_task, config.max_delay_s, config.long_slots, config.short_slots_per_long};
  s.multiplier = config.traffic.multiplier;
  e.n_max = cap_users(config.n_max, s.multiplier);
  e.slot_duration_s = config.slot_duration_s;
  e.validate();
  s.slicer.aggregation = slicer::aggregation_from_string(config.aggregation);
  s.base_traffic = build_traffic(config);
  s.traffic = s.multiplier == 1.0 ? s.base_traffic : traffic::scale(s.base_traffic, s.multiplier, e.n_max);
  const int days = static_cast<int>(s.traffic.length() / static_cast<std::size_t>(e.slots_per_day()));
  if (config.train_days > days) throw std::invalid_argument("config: train_days exceeds the traffic length");
  for (int d : config.eval_days) {
    if (d < 1 || d >= days) throw std::invalid_argument("config: eval day outside the traffic series");
  }
  return s;
}

std::vector<std::vector<double>> ScaledForecaster::forecast(const traffic::TrafficSeries& history,
                                                            std::size_t end_slot, int horizon) {
  auto f = inner_.forecast(history, end_slot, horizon);
  if (multiplier_ != 1.0) {
    for (auto& row : f) {
      for (double& v : row) v = std::min(cap_, std::round(v * multiplier_));
    }
  }
  return f;
}

// ---------------------------------------------------------------- metrics

Metrics compute_metrics(const MetricsLog& log) {
  if (log.slots.empty()) throw std::invalid_argument("compute_metrics: empty log");
  Metrics m;
  double rented_bw = 0, used_bw = 0, rented_vm = 0, used_vm = 0;
  long violations = 0, completed = 0;
  double up = 0, queue = 0, exec = 0;
  for (const auto& r : log.slots) {
    m.revenue += r.revenue;
    m.cost += r.cost;
    m.region_profit[r.region_id] += r.revenue - r.cost;
    rented_bw += r.rented_bandwidth_s;
    used_bw += r.used_bandwidth_s;
    rented_vm += r.rented_vm_s;
    used_vm += r.used_vm_s;
    m.tasks += r.tasks;
    violations += r.violations;
    completed += r.completed;
    up += r.upload_s;
    queue += r.queue_s;
    exec += r.exec_s;
  }
  m.profit = m.revenue - m.cost;
  if (m.tasks == 0) {
    m.ru = m.ru_bandwidth = m.ru_vm = 0.0;
    m.dvr = 0.0;
    m.dvr_defined = false;
    return m;
  }
  m.ru_bandwidth = rented_bw > 0 ? used_bw / rented_bw : 0.0;
  m.ru_vm = rented_vm > 0 ? used_vm / rented_vm : 0.0;
  m.ru = 0.5 * (m.ru_bandwidth + m.ru_vm);
  m.dvr = static_cast<double>(violations) / static_cast<double>(m.tasks);
  if (completed > 0) {
    m.mean_upload_s = up / static_cast<double>(completed);
    m.mean_queue_s = queue / static_cast<double>(completed);
    m.mean_exec_s = exec / static_cast<double>(completed);
  }
  return m;
}

void write_metrics_log(const MetricsLog& log, const std::filesystem::path& file) {
  auto out = open_out(file);
  out << "method,seed,day,long_slot,region,revenue,cost,rented_bandwidth_s,used_bandwidth_s,rented_vm_s,used_vm_s,"
         "tasks,violations,completed,upload_s,queue_s,exec_s,bandwidth_tier,vm_tier\n";
  for (const auto& r : log.slots) {
    out << log.method << ',' << log.seed << ',' << r.day << ',' << r.long_slot << ',' << r.region_id << ','
        << r.revenue << ',' << r.cost << ',' << r.rented_bandwidth_s << ',' << r.used_bandwidth_s << ','
        << r.rented_vm_s << ',' << r.used_vm_s << ',' << r.tasks << ',' << r.violations << ',' << r.completed << ','
        << r.upload_s << ',' << r.queue_s << ',' << r.exec_s << ',' << r.bandwidth_tier << ',' << r.vm_tier << '\n';
  }
}

MetricsLog read_metrics_log(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("method,seed,day,long_slot", 0) != 0) throw std::runtime_error("not a metrics log: " + file.string());
  MetricsLog log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 19) throw std::runtime_error("malformed metrics row in " + file.string());
    log.method = f[0];
    log.seed = std::stoull(f[1]);
    SlotRecord r;
    r.day = std::stoi(f[2]);
    r.long_slot = std::stoi(f[3]);
    r.region_id = std::stoi(f[4]);
    r.revenue = std::stod(f[5]);
    r.cost = std::stod(f[6]);
    r.rented_bandwidth_s = std::stod(f[7]);
    r.used_bandwidth_s = std::stod(f[8]);
    r.rented_vm_s = std::stod(f[9]);
    r.used_vm_s = std::stod(f[10]);
    r.tasks = std::stoi(f[11]);
    r.violations = std::stoi(f[12]);
    r.completed = std::stoi(f[13]);
    r.upload_s = std::stod(f[14]);
    r.queue_s = std::stod(f[15]);
    r.exec_s = std::stod(f[16]);
    r.bandwidth_tier = std::stoul(f[17]);
    r.vm_tier = std::stoul(f[18]);
    log.slots.push_back(r);
  }
  return log;
}

void write_metrics_summary(const std::vector<std::pair<std::string, Metrics>>& rows,
                           const std::filesystem::path& file) {
  auto out = open_out(file);
  out << "label,profit,revenue,cost,ru,ru_bandwidth,ru_vm,dvr,dvr_defined,tasks,mean_upload_s,mean_queue_s,"
         "mean_exec_s\n";
  for (const auto& [label, m] : rows) {
    out << label << ',' << m.profit << ',' << m.revenue << ',' << m.cost << ',' << m.ru << ',' << m.ru_bandwidth
        << ',' << m.ru_vm << ',' << m.dvr << ',' << (m.dvr_defined ? 1 : 0) << ',' << m.tasks << ','
        << m.mean_upload_s << ',' << m.mean_queue_s << ',' << m.mean_exec_s << '\n';
  }
}

// ---------------------------------------------------------------- methods

agent::AgentKind offloading_kind(const std::string& method) {
  if (method == "td3_no_distill") return agent::AgentKind::kTd3NoDistill;
  if (method == "ddpg") return agent::AgentKind::kDdpgSingleCritic;
  return agent::AgentKind::kDualDistill;
}

bool method_uses_predictor(const std::string& method) {
  return method == "sliceoff" || method == "td3_no_distill" || method == "ddpg";
}

namespace {

/// Dynamic slicing for one day, driven by the tasks observed in the previous long slot.
class DaySlicer {
 public:
  DaySlicer(const Scenario& scenario, slicer::Forecaster& forecaster)
      : scenario_(scenario), forecaster_(forecaster) {}

  slicer::SliceAdjustment decide(int day, int long_slot, std::span<const slicer::TaskStats> stats,
                                 std::mt19937_64& rng) {
    const auto& econ = scenario_.env.econ;
    const auto end_slot = static_cast<std::size_t>(day * scenario_.env.slots_per_day() +
                                                   long_slot * econ.short_slots_per_long);
    ScaledForecaster scaled(forecaster_, scenario_.multiplier, scenario_.env.n_max);
    return slicer::adjust_slices(scaled, scenario_.base_traffic, end_slot, long_slot, stats, scenario_.env.catalogs,
                                 scenario_.slicer, econ, scenario_.env.radio, rng);
  }

 private:
  const Scenario& scenario_;
  slicer::Forecaster& forecaster_;
};

std::vector<slicer::TaskStats> observed_stats(const Scenario& scenario, const env::DayTasks& tasks, int long_slot,
                                              const std::vector<slicer::TaskStats>& fallback) {
  std::vector<slicer::TaskStats> out;
  for (std::size_t r = 0; r < scenario.env.regions(); ++r) {
    const auto seen = env::long_slot_tasks(tasks, long_slot, r, scenario.env.econ.short_slots_per_long);
    out.push_back(slicer::TaskStats::from_tasks(seen, fallback[r]));
  }
  return out;
}

/// Decision frozen for a whole run: the slicing of the mean historical traffic.
slicer::SliceAdjustment static_slices(const ExperimentConfig& config, const Scenario& scenario, std::uint64_t seed) {
  const auto train_slots = static_cast<std::size_t>(config.train_days * scenario.env.slots_per_day());
  std::vector<double> users;
  for (const auto& row : scenario.traffic.counts) {
    users.push_back(std::accumulate(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(train_slots), 0.0) /
                    static_cast<double>(train_slots));
  }
  std::mt19937_64 rng(mix(seed, 0x57a71cULL));
  return slicer::slices_for_users(users, 0, scenario.cold_start, scenario.env.catalogs, scenario.slicer,
                                  scenario.env.econ, scenario.env.radio, rng);
}

std::unique_ptr<slicer::Forecaster> make_forecaster(const std::string& method, Artifacts& artifacts,
                                                    const ExperimentConfig& config, const Scenario& scenario) {
  if (method_uses_predictor(method)) {
    return std::make_unique<slicer::PredictorForecaster>(artifacts.predictor(config, scenario));
  }
  if (method == "naive_last") return std::make_unique<slicer::NaiveForecaster>(predictor::NaiveKind::kLastValue);
  if (method == "naive_mean") return std::make_unique<slicer::NaiveForecaster>(predictor::NaiveKind::kMovingAverage);
  if (method == "oracle") return std::make_unique<slicer::OracleForecaster>();
  return nullptr;
}

}  // namespace

agent::EpisodeFactory training_factory(const Scenario& scenario, slicer::Forecaster& forecaster,
                                       const ExperimentConfig& config, std::uint64_t seed) {
  auto cache = std::make_shared<std::map<int, std::vector<std::vector<std::vector<double>>>>>();
  const int train_days = config.train_days;
  return [&scenario, &forecaster, seed, cache, train_days](int agent_index, int episode) {
    const int day = 1 + episode % (train_days - 1);
    const auto& econ = scenario.env.econ;
    auto& forecasts = (*cache)[day];
    if (forecasts.empty()) {
      ScaledForecaster scaled(forecaster, scenario.multiplier, scenario.env.n_max);
      for (int h = 0; h < econ.long_slots; ++h) {
        const auto end = static_cast<std::size_t>(day * scenario.env.slots_per_day() + h * econ.short_slots_per_long);
        forecasts.push_back(scaled.forecast(scenario.base_traffic, end, econ.short_slots_per_long));
      }
    }
    const std::uint64_t episode_seed = mix(mix(seed, static_cast<std::uint64_t>(agent_index) + 1),
                                           static_cast<std::uint64_t>(episode));
    agent::EpisodeSetup setup;
    setup.tasks = env::sample_day(scenario.env, scenario.traffic, day, episode_seed);
    std::mt19937_64 rng(mix(episode_seed, 0x51ceULL));
    auto stats = scenario.cold_start;
    for (int h = 0; h < econ.long_slots; ++h) {
      if (h > 0) stats = observed_stats(scenario, setup.tasks, h - 1, scenario.cold_start);
      std::vector<double> users;
      for (const auto& row : forecasts[static_cast<std::size_t>(h)]) {
        users.push_back(slicer::aggregate_counts(row, scenario.slicer.aggregation));
      }
      setup.plan.push_back(slicer::slices_for_users(users, h, stats, scenario.env.catalogs, scenario.slicer, econ,
                                                    scenario.env.radio, rng)
                               .decisions);
    }
    return setup;
  };
}

TrainedAgent train_agent(const ExperimentConfig& config, const Scenario& scenario, slicer::Forecaster& forecaster,
                         agent::AgentKind kind, std::uint64_t seed) {
  const auto factory = training_factory(scenario, forecaster, config, seed);
  auto result = kind == agent::AgentKind::kDualDistill
                    ? agent::train_pair(scenario.env, factory, config.agent_episodes, config.agent, seed)
                    : agent::train_single(scenario.env, factory, config.agent_episodes, config.agent, kind, seed);
  TrainedAgent out;
  const std::size_t best = config.agent_episodes > 0 ? result.best_agent() : 0;
  out.agent = std::move(result.agents[best]);
  out.curves = std::move(result.curves);
  return out;
}

// ---------------------------------------------------------------- artifacts

std::string Artifacts::predictor_key(const ExperimentConfig& config) {
  // Trained on the traffic before the multiplier, so the multiplier is not part of the key.
  nlohmann::json j = config;
  auto traffic = j.at("traffic");
  traffic.erase("multiplier");
  return traffic.dump() + "|" + j.at("predictor").dump() + "|" + std::to_string(config.train_days) + "|" +
         config.predictor_checkpoint;
}

std::string Artifacts::agent_key(const ExperimentConfig& config, const Scenario& scenario, agent::AgentKind kind,
                                 std::uint64_t seed) {
  nlohmann::json j = config;
  auto traffic = j.at("traffic");
  traffic.erase("multiplier");
  return agent::to_string(kind) + "|" + std::to_string(seed) + "|" + std::to_string(scenario.env.n_max) + "|" +
         traffic.dump() + "|" + j.at("agent").dump() + "|" + std::to_string(config.agent_episodes) + "|" +
         config.agent_checkpoint;
}

predictor::TrafficPredictor& Artifacts::predictor(const ExperimentConfig& config, const Scenario& scenario) {
  std::lock_guard lock(mutex_);
  const auto key = predictor_key(config);
  auto it = predictors_.find(key);
  if (it != predictors_.end()) return *it->second;
  std::unique_ptr<predictor::TrafficPredictor> model;
  if (!config.predictor_checkpoint.empty()) {
    model = std::make_unique<predictor::TrafficPredictor>(predictor::TrafficPredictor::load(config.predictor_checkpoint));
  } else {
    const auto train_slots = static_cast<std::size_t>(config.train_days * scenario.env.slots_per_day());
    auto pc = config.predictor;
    pc.regions = static_cast<int>(scenario.env.regions());
    pc.horizon_slots = scenario.env.econ.short_slots_per_long;
    pc.slots_per_day = scenario.env.slots_per_day();
    auto result = predictor::train_predictor(traffic::slice(scenario.base_traffic, 0, train_slots), pc);
    loss_curves_[key] = result.curve;
    model = std::make_unique<predictor::TrafficPredictor>(std::move(result.model));
  }
  return *predictors_.emplace(key, std::move(model)).first->second;
}

agent::TwinCriticAgent& Artifacts::agent(const ExperimentConfig& config, const Scenario& scenario,
                                         agent::AgentKind kind, std::uint64_t seed) {
  std::lock_guard lock(mutex_);
  const auto key = agent_key(config, scenario, kind, seed);
  auto it = agents_.find(key);
  if (it != agents_.end()) return *it->second;
  std::unique_ptr<agent::TwinCriticAgent> trained;
  if (!config.agent_checkpoint.empty()) {
    trained = agent::TwinCriticAgent::load(config.agent_checkpoint);
    if (trained->state_dim() != scenario.env.state_dim() || trained->action_dim() != scenario.env.action_dim()) {
      throw std::runtime_error("agent checkpoint does not match the scenario dimensions");
    }
  } else {
    slicer::PredictorForecaster forecaster(predictor(config, scenario));
    auto t = train_agent(config, scenario, forecaster, kind, seed);
    curves_[key] = std::move(t.curves);
    trained = std::move(t.agent);
  }
  return *agents_.emplace(key, std::move(trained)).first->second;
}

// ---------------------------------------------------------------- run

MetricsLog run_experiment(const ExperimentConfig& config, const std::string& method, std::uint64_t seed,
                          Artifacts& artifacts, bool keep_trace) {
  const Scenario scenario = build_scenario(config);
  const auto& known = known_methods();
  if (std::find(known.begin(), known.end(), method) == known.end()) {
    throw std::invalid_argument("unknown method: " + method);
  }
  // Resolve every trained component before simulating.
  auto forecaster = make_forecaster(method, artifacts, config, scenario);
  auto& policy_agent = artifacts.agent(config, scenario, offloading_kind(method), seed);
  const auto policy = agent::greedy_policy(policy_agent);

  MetricsLog log;
  log.method = method;
  log.seed = seed;
  const auto& e = scenario.env;
  const int per_long = e.econ.short_slots_per_long;
  const auto regions = e.regions();
  std::optional<slicer::SliceAdjustment> frozen;
  if (!forecaster) frozen = static_slices(config, scenario, seed);

  env::OffloadEnv environment(e);
  environment.enable_trace(keep_trace);
  auto stats = scenario.cold_start;
  for (int day : config.eval_days) {
    auto tasks = env::sample_day(e, scenario.traffic, day, mix(seed, 0xe7a1ULL));
    std::mt19937_64 rng(mix(mix(seed, 0x5110ULL), static_cast<std::uint64_t>(day)));
    std::optional<DaySlicer> slicer_for_day;
    if (forecaster) slicer_for_day.emplace(scenario, *forecaster);
    auto decide = [&](int h) {
      if (frozen) {
        auto adj = *frozen;
        for (auto& d : adj.diagnostics) d.long_slot = h;
        return adj;
      }
      return slicer_for_day->decide(day, h, stats, rng);
    };
    const auto day_tasks = tasks;
    auto first = decide(0);
    std::vector<SlotRecord> rows(static_cast<std::size_t>(e.econ.long_slots) * regions);
    auto book = [&](int h, const slicer::SliceAdjustment& adj) {
      for (std::size_t r = 0; r < regions; ++r) {
        auto& row = rows[static_cast<std::size_t>(h) * regions + r];
        row.day = day;
        row.long_slot = h;
        row.region_id = e.catalogs[r].region_id;
        row.cost = core::region_cost(adj.decisions[r], e.catalogs[r]);
        row.bandwidth_tier = adj.decisions[r].bandwidth_index();
        row.vm_tier = adj.decisions[r].vm_index();
      }
      log.diagnostics.insert(log.diagnostics.end(), adj.diagnostics.begin(), adj.diagnostics.end());
    };
    book(0, first);
    environment.reset(std::move(tasks), {first.decisions});
    while (!environment.done()) {
      if (environment.at_long_slot_boundary() && environment.current_slot() > 0) {
        const int h = environment.current_slot() / per_long;
        stats = observed_stats(scenario, day_tasks, h - 1, scenario.cold_start);
        auto adj = decide(h);
        book(h, adj);
        environment.apply_slice_change(adj.decisions);
      }
      const auto out =
          environment.step(env::ActionVector::from_vector(policy(environment.current()), e.n_max));
      auto& row = rows[static_cast<std::size_t>(out.info.long_slot) * regions + out.info.region];
      row.revenue += out.reward;
      row.rented_bandwidth_s += out.info.rented_bandwidth_s;
      row.used_bandwidth_s += out.info.used_bandwidth_s;
      row.rented_vm_s += out.info.rented_vm_s;
      row.used_vm_s += out.info.used_vm_s;
      for (const auto& t : out.info.tasks) {
        ++row.tasks;
        if (!(t.total_s <= e.econ.max_delay_s)) ++row.violations;
        if (std::isfinite(t.total_s)) {
          ++row.completed;
          row.upload_s += t.upload_s;
          row.queue_s += t.queue_s;
          row.exec_s += t.exec_s;
        }
      }
    }
    stats = observed_stats(scenario, day_tasks, e.econ.long_slots - 1, scenario.cold_start);
    log.slots.insert(log.slots.end(), rows.begin(), rows.end());
    if (keep_trace) log.trace.insert(log.trace.end(), environment.trace().begin(), environment.trace().end());
  }
  return log;
}

// ---------------------------------------------------------------- sweep

ExperimentConfig with_axis(const ExperimentConfig& config, const std::string& axis, double value) {
  ExperimentConfig c = config;
  if (axis == "traffic_multiplier") {
    c.traffic.multiplier = value;
  } else if (axis == "max_delay") {
    c.max_delay_s = value;
  } else if (axis == "omega") {
    for (auto& r : c.regions) r.omega = value;
  } else {
    throw std::invalid_argument("unknown sweep axis: " + axis);
  }
  return c;
}

std::vector<SweepRow> sweep(const ExperimentConfig& config, const std::string& axis,
                            const std::vector<double>& values, const std::vector<std::string>& methods,
                            Artifacts& artifacts) {
  if (values.empty() || methods.empty()) throw std::invalid_argument("sweep: no values or methods");
  struct Cell {
    std::size_t value_index;
    std::string method;
    std::uint64_t seed;
  };
  std::vector<ExperimentConfig> configs;
  for (double v : values) configs.push_back(with_axis(config, axis, v));
  std::vector<Cell> cells;
  for (std::size_t v = 0; v < values.size(); ++v) {
    for (const auto& m : methods) {
      for (auto s : config.seeds) cells.push_back({v, m, s});
    }
  }
  // Training is resolved serially so every cell sees the same artifacts regardless of scheduling.
  for (const auto& cell : cells) {
    const auto& c = configs[cell.value_index];
    const Scenario scenario = build_scenario(c);
    if (method_uses_predictor(cell.method)) artifacts.predictor(c, scenario);
    artifacts.agent(c, scenario, offloading_kind(cell.method), cell.seed);
  }
  std::vector<SweepRow> rows(cells.size());
  std::vector<std::string> errors(cells.size());
  const auto n = static_cast<std::int64_t>(cells.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& cell = cells[static_cast<std::size_t>(i)];
    try {
      const auto log = run_experiment(configs[cell.value_index], cell.method, cell.seed, artifacts);
      rows[static_cast<std::size_t>(i)] = {axis, values[cell.value_index], cell.method, cell.seed,
                                           compute_metrics(log)};
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw std::runtime_error("sweep cell failed: " + e);
  }
  return rows;
}

void write_sweep_table(const std::vector<SweepRow>& rows, const std::filesystem::path& file) {
  auto out = open_out(file);
  std::vector<int> region_ids;
  if (!rows.empty()) {
    for (const auto& [id, p] : rows.front().metrics.region_profit) region_ids.push_back(id);
  }
  out << "axis,value,method,seed,profit,revenue,cost,ru,dvr,mean_upload_s,mean_queue_s,mean_exec_s";
  for (int id : region_ids) out << ",profit_region_" << id;
  out << '\n';
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    out << r.axis << ',' << r.value << ',' << r.method << ',' << r.seed << ',' << m.profit << ',' << m.revenue << ','
        << m.cost << ',' << m.ru << ',' << m.dvr << ',' << m.mean_upload_s << ',' << m.mean_queue_s << ','
        << m.mean_exec_s;
    for (int id : region_ids) {
      const auto it = m.region_profit.find(id);
      out << ',' << (it == m.region_profit.end() ? 0.0 : it->second);
    }
    out << '\n';
  }
}

std::vector<SweepRow> read_sweep_table(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  std::string line;
  std::getline(in, line);
  const auto header = split_csv(line);
  if (header.size() < 12 || header[0] != "axis") throw std::runtime_error("not a sweep table: " + file.string());
  std::vector<int> region_ids;
  for (std::size_t k = 12; k < header.size(); ++k) region_ids.push_back(std::stoi(header[k].substr(14)));
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != header.size()) throw std::runtime_error("malformed sweep row in " + file.string());
    SweepRow r;
    r.axis = f[0];
    r.value = std::stod(f[1]);
    r.method = f[2];
    r.seed = std::stoull(f[3]);
    r.metrics.profit = std::stod(f[4]);
    r.metrics.revenue = std::stod(f[5]);
    r.metrics.cost = std::stod(f[6]);
    r.metrics.ru = std::stod(f[7]);
    r.metrics.dvr = std::stod(f[8]);
    r.metrics.mean_upload_s = std::stod(f[9]);
    r.metrics.mean_queue_s = std::stod(f[10]);
    r.metrics.mean_exec_s = std::stod(f[11]);
    for (std::size_t k = 0; k < region_ids.size(); ++k) r.metrics.region_profit[region_ids[k]] = std::stod(f[12 + k]);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace edgeslice::harness
