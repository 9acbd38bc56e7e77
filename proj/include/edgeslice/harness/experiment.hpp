#pragma once

// Long-slot orchestration, metrics, baselines and sweeps.

#include "edgeslice/agent/agent.hpp"
#include "edgeslice/env/offload_env.hpp"
#include "edgeslice/predictor/predictor.hpp"
#include "edgeslice/slicer/slicer.hpp"
#include "edgeslice/traffic/traffic.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace edgeslice::harness {

struct RegionSpec {
  int id = 1;
  std::vector<double> bandwidth_tiers_mhz;
  std::vector<double> bandwidth_costs;
  std::vector<double> vm_tiers;
  std::vector<double> vm_costs;
  double data_kb_lo = 100.0, data_kb_hi = 300.0;
  double density_lo = 400.0, density_hi = 600.0;
  double omega = 0.3;
};

struct TrafficSpec {
  std::string source = "synthetic";  // synthetic | step | file
  std::string file;                  // raw dump or canonical CSV
  std::vector<std::int64_t> cells{4259, 4456, 5060};
  int rescale_lo = 2;
  int rescale_hi = 10;
  std::uint64_t seed = 3;
  int days = 30;
  double base = 6.0;
  double amplitude = 4.0;
  double noise_sd = 0.5;
  int step_low = 5;
  int step_high = 10;
  int step_slot = 72;
  double multiplier = 1.0;
};

struct ExperimentConfig {
  std::vector<RegionSpec> regions;
  double vm_freq_ghz = 2.0;
  double upload_power_mw = 100.0;
  double gain_ref_db = -60.0;
  double noise_power_dbm = -110.0;
  double path_loss_exp = 2.0;
  double distance_lo_m = 1.0;
  double distance_hi_m = 2000.0;
  std::vector<int> priorities{1, 2, 3};
  double reward_per_task = 1.0;
  double max_delay_s = 1.0;
  int long_slots = 24;
  int short_slots_per_long = 6;
  int n_max = 10;
  double slot_duration_s = 600.0;

  TrafficSpec traffic;
  std::string aggregation = "max";
  predictor::PredictorConfig predictor;
  agent::AgentConfig agent;
  int agent_episodes = 300;
  int train_days = 25;              // days [0, train_days) train the predictor and the agents
  std::vector<int> eval_days{25, 26, 27, 28, 29};

  std::string method = "sliceoff";
  std::vector<std::uint64_t> seeds{1};
  std::map<std::string, std::vector<double>> sweep_axes;
  std::string output_dir = "runs/default";
  std::string predictor_checkpoint;  // optional; trained in-process when empty
  std::string agent_checkpoint;      // optional; trained in-process when empty

  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);
ExperimentConfig load_config(const std::filesystem::path& file);
void save_config(const ExperimentConfig& config, const std::filesystem::path& file);

const std::vector<std::string>& known_methods();

/// Scenario after applying the traffic multiplier and the configured traffic source.
struct Scenario {
  env::EnvConfig env;
  traffic::TrafficSeries base_traffic;  // before the multiplier
  traffic::TrafficSeries traffic;       // what users actually generate
  slicer::SlicerConfig slicer;
  std::vector<slicer::TaskStats> cold_start;
  double multiplier = 1.0;
};

traffic::TrafficSeries build_traffic(const ExperimentConfig& config);
Scenario build_scenario(const ExperimentConfig& config);

/// Forecasts on the base traffic scaled by the multiplier.
class ScaledForecaster : public slicer::Forecaster {
 public:
  ScaledForecaster(slicer::Forecaster& inner, double multiplier, double cap)
      : inner_(inner), multiplier_(multiplier), cap_(cap) {}
  std::vector<std::vector<double>> forecast(const traffic::TrafficSeries& history, std::size_t end_slot,
                                            int horizon) override;
  std::string name() const override { return inner_.name(); }

 private:
  slicer::Forecaster& inner_;
  double multiplier_;
  double cap_;
};

/// Per (day, long slot, region) accounting row.
struct SlotRecord {
  int day = 0;
  int long_slot = 0;
  int region_id = 0;
  double revenue = 0.0;
  double cost = 0.0;
  double rented_bandwidth_s = 0.0;
  double used_bandwidth_s = 0.0;
  double rented_vm_s = 0.0;
  double used_vm_s = 0.0;
  int tasks = 0;
  int violations = 0;
  int completed = 0;  // tasks with a finite completion time
  double upload_s = 0.0;
  double queue_s = 0.0;
  double exec_s = 0.0;
  std::size_t bandwidth_tier = 0;
  std::size_t vm_tier = 0;
};

struct MetricsLog {
  std::string method;
  std::uint64_t seed = 0;
  std::vector<SlotRecord> slots;
  std::vector<slicer::SliceDiagnostics> diagnostics;
  std::vector<env::TraceRow> trace;
};

struct Metrics {
  double profit = 0.0;
  double revenue = 0.0;
  double cost = 0.0;
  double ru = 0.0;
  double ru_bandwidth = 0.0;
  double ru_vm = 0.0;
  double dvr = 0.0;
  bool dvr_defined = true;
  long tasks = 0;
  double mean_upload_s = 0.0;
  double mean_queue_s = 0.0;
  double mean_exec_s = 0.0;
  std::map<int, double> region_profit;
};

Metrics compute_metrics(const MetricsLog& log);

void write_metrics_log(const MetricsLog& log, const std::filesystem::path& file);
MetricsLog read_metrics_log(const std::filesystem::path& file);
void write_metrics_summary(const std::vector<std::pair<std::string, Metrics>>& rows, const std::filesystem::path& file);

/// Trained components shared by runs; filled lazily and thread-safe. Predictors are
/// cached per (traffic, predictor config); agents per (kind, seed, traffic, n_max,
/// agent config, episodes), so sweeps over the deadline or the delay ratio reuse the
/// agents of the base scenario.
class Artifacts {
 public:
  predictor::TrafficPredictor& predictor(const ExperimentConfig& config, const Scenario& scenario);
  agent::TwinCriticAgent& agent(const ExperimentConfig& config, const Scenario& scenario, agent::AgentKind kind,
                                std::uint64_t seed);
  /// Training curves of agents trained in this process, by cache key.
  const std::map<std::string, std::vector<std::vector<agent::EpisodeRecord>>>& curves() const { return curves_; }
  const std::map<std::string, predictor::LossCurve>& loss_curves() const { return loss_curves_; }

  static std::string predictor_key(const ExperimentConfig& config);
  static std::string agent_key(const ExperimentConfig& config, const Scenario& scenario, agent::AgentKind kind,
                               std::uint64_t seed);

 private:
  std::recursive_mutex mutex_;
  std::map<std::string, std::unique_ptr<predictor::TrafficPredictor>> predictors_;
  std::map<std::string, predictor::LossCurve> loss_curves_;
  std::map<std::string, std::unique_ptr<agent::TwinCriticAgent>> agents_;
  std::map<std::string, std::vector<std::vector<agent::EpisodeRecord>>> curves_;
};

/// Agent kind that performs the offloading for a method.
agent::AgentKind offloading_kind(const std::string& method);
bool method_uses_predictor(const std::string& method);

/// Episode source used to train agents on `scenario` with the dynamic slicer.
agent::EpisodeFactory training_factory(const Scenario& scenario, slicer::Forecaster& forecaster,
                                       const ExperimentConfig& config, std::uint64_t seed);

/// Trains the agents for `kind` on `scenario`; returns the chosen agent and all curves.
struct TrainedAgent {
  std::unique_ptr<agent::TwinCriticAgent> agent;
  std::vector<std::vector<agent::EpisodeRecord>> curves;
};
TrainedAgent train_agent(const ExperimentConfig& config, const Scenario& scenario, slicer::Forecaster& forecaster,
                         agent::AgentKind kind, std::uint64_t seed);

/// Runs one method for one seed over the evaluation days.
MetricsLog run_experiment(const ExperimentConfig& config, const std::string& method, std::uint64_t seed,
                          Artifacts& artifacts, bool keep_trace = false);

struct SweepRow {
  std::string axis;
  double value = 0.0;
  std::string method;
  std::uint64_t seed = 0;
  Metrics metrics;
};

/// Applies one sweep axis value to a copy of the config.
ExperimentConfig with_axis(const ExperimentConfig& config, const std::string& axis, double value);

std::vector<SweepRow> sweep(const ExperimentConfig& config, const std::string& axis,
                            const std::vector<double>& values, const std::vector<std::string>& methods,
                            Artifacts& artifacts);

void write_sweep_table(const std::vector<SweepRow>& rows, const std::filesystem::path& file);
std::vector<SweepRow> read_sweep_table(const std::filesystem::path& file);

}  // namespace edgeslice::harness
