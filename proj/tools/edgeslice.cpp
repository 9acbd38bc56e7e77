// Command-line entry point: prepare-traffic, train-predictor, train-agent, run, sweep, report.

#include "edgeslice/harness/experiment.hpp"
#include "edgeslice/harness/report.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace edgeslice;

namespace {

struct Common {
  std::string config = "configs/default.json";
  std::string out;
  std::vector<std::uint64_t> seeds;
  std::string method;
};

harness::ExperimentConfig load(const Common& c) {
  auto config = harness::load_config(c.config);
  if (!c.seeds.empty()) config.seeds = c.seeds;
  if (!c.method.empty()) config.method = c.method;
  if (!c.out.empty()) config.output_dir = c.out;
  config.validate();
  fs::create_directories(config.output_dir);
  harness::save_config(config, fs::path(config.output_dir) / "config.json");
  return config;
}

void print(const nlohmann::json& j) { std::cout << j.dump() << '\n'; }

std::string seed_tag(std::uint64_t seed) { return "seed" + std::to_string(seed); }

void prepare_traffic(const Common& c) {
  const auto config = load(c);
  const auto series = harness::build_traffic(config);
  const auto file = fs::path(config.output_dir) / "traffic.csv";
  traffic::write_canonical(series, file);
  print({{"traffic", file.string()}, {"regions", series.regions()}, {"slots", series.length()}});
}

void train_predictor(const Common& c) {
  const auto config = load(c);
  const auto scenario = harness::build_scenario(config);
  harness::Artifacts artifacts;
  auto& model = artifacts.predictor(config, scenario);
  const fs::path dir = config.output_dir;
  model.save(dir / "predictor.json");
  for (const auto& [key, curve] : artifacts.loss_curves()) predictor::write_loss_curve(curve, dir / "predictor_loss.csv");

  // Held-out error on the evaluation days against the last-value baseline.
  const auto per_day = static_cast<std::size_t>(scenario.env.slots_per_day());
  const auto begin = static_cast<std::size_t>(config.train_days) * per_day;
  const auto end = scenario.base_traffic.length();
  nlohmann::json out{{"predictor", (dir / "predictor.json").string()}};
  if (end > begin) {
    const double mse = predictor::evaluate_mse(model, scenario.base_traffic, begin, end);
    const double naive = predictor::naive_mse(scenario.base_traffic, model.config(), predictor::NaiveKind::kLastValue,
                                              begin, end);
    out["test_mse"] = mse;
    out["last_value_mse"] = naive;
  }
  print(out);
}

void train_agent(const Common& c) {
  const auto config = load(c);
  const auto scenario = harness::build_scenario(config);
  harness::Artifacts artifacts;
  const fs::path dir = config.output_dir;
  slicer::PredictorForecaster forecaster(artifacts.predictor(config, scenario));
  const auto kind = harness::offloading_kind(config.method);
  nlohmann::json written = nlohmann::json::array();
  for (auto seed : config.seeds) {
    auto trained = harness::train_agent(config, scenario, forecaster, kind, seed);
    const auto stem = "agent_" + config.method + "_" + seed_tag(seed);
    trained.agent->save(dir / (stem + ".json"));
    agent::write_reward_curve(trained.curves, dir / ("reward_curve_" + config.method + "_" + seed_tag(seed) + ".csv"));
    written.push_back((dir / (stem + ".json")).string());
  }
  print({{"agents", written}});
}

void run(const Common& c, bool trace) {
  const auto config = load(c);
  harness::Artifacts artifacts;
  const fs::path dir = config.output_dir;
  std::vector<std::pair<std::string, harness::Metrics>> summary;
  for (auto seed : config.seeds) {
    const auto log = harness::run_experiment(config, config.method, seed, artifacts, trace);
    const auto tag = config.method + "_" + seed_tag(seed);
    harness::write_metrics_log(log, dir / ("metrics_" + tag + ".csv"));
    slicer::write_diagnostics(log.diagnostics, dir / ("slices_" + tag + ".csv"));
    if (trace) env::write_trace(log.trace, dir / ("trace_" + tag + ".csv"));
    summary.emplace_back(tag, harness::compute_metrics(log));
  }
  for (const auto& [key, curves] : artifacts.curves()) {
    (void)key;
    agent::write_reward_curve(curves, dir / ("reward_curve_" + config.method + ".csv"));
  }
  harness::write_metrics_summary(summary, dir / ("summary_" + config.method + ".csv"));
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [tag, m] : summary) out.push_back({{"run", tag}, {"profit", m.profit}, {"ru", m.ru}, {"dvr", m.dvr}});
  print({{"runs", out}});
}

void sweep(const Common& c, const std::string& axis, std::vector<double> values, std::vector<std::string> methods) {
  const auto config = load(c);
  if (values.empty()) {
    const auto it = config.sweep_axes.find(axis);
    if (it == config.sweep_axes.end()) throw std::invalid_argument("no values given for sweep axis " + axis);
    values = it->second;
  }
  if (methods.empty()) methods = {config.method};
  harness::Artifacts artifacts;
  const auto rows = harness::sweep(config, axis, values, methods, artifacts);
  const auto file = fs::path(config.output_dir) / ("sweep_" + axis + ".csv");
  harness::write_sweep_table(rows, file);
  print({{"sweep", file.string()}, {"rows", rows.size()}});
}

void report(const std::vector<std::string>& inputs, const std::string& out) {
  harness::ReportInputs in;
  std::vector<fs::path> files;
  for (const auto& p : inputs) {
    if (fs::is_directory(p)) {
      for (const auto& e : fs::directory_iterator(p)) {
        if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
      }
    } else {
      if (!fs::exists(p)) throw std::runtime_error("no such log: " + p);
      files.push_back(p);
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const auto name = f.filename().string();
    if (name.rfind("metrics_", 0) == 0) {
      in.logs.push_back(harness::read_metrics_log(f));
    } else if (name.rfind("sweep_", 0) == 0) {
      const auto rows = harness::read_sweep_table(f);
      in.sweep_rows.insert(in.sweep_rows.end(), rows.begin(), rows.end());
    } else if (name.rfind("reward_curve", 0) == 0 && in.reward_curve.empty()) {
      in.reward_curve = harness::read_reward_curve(f);
    }
  }
  const fs::path dir = out.empty() ? (inputs.empty() ? fs::path("report") : fs::path(inputs.front()) / "report")
                                   : fs::path(out);
  const auto written = harness::report(in, dir);
  nlohmann::json list = nlohmann::json::array();
  for (const auto& f : written.files) list.push_back(f.string());
  print({{"report", list}});
}

void add_common(CLI::App* cmd, Common& c, bool with_method) {
  cmd->add_option("-c,--config", c.config, "config file")->check(CLI::ExistingFile);
  cmd->add_option("-o,--out", c.out, "output directory (overrides the config)");
  cmd->add_option("-s,--seed", c.seeds, "seed(s) (overrides the config)");
  if (with_method) cmd->add_option("-m,--method", c.method, "method (overrides the config)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Edge slicing and offloading experiments"};
  app.require_subcommand(1);

  Common common;
  auto* prep = app.add_subcommand("prepare-traffic", "write the canonical traffic series");
  add_common(prep, common, false);
  auto* tp = app.add_subcommand("train-predictor", "train the traffic predictor");
  add_common(tp, common, false);
  auto* ta = app.add_subcommand("train-agent", "train offloading agents");
  add_common(ta, common, true);
  bool trace = false;
  auto* rn = app.add_subcommand("run", "run one method over the evaluation days");
  add_common(rn, common, true);
  rn->add_flag("--trace", trace, "also write the per-task trace");
  std::string axis;
  std::vector<double> values;
  std::vector<std::string> methods;
  auto* sw = app.add_subcommand("sweep", "sweep one axis over methods and seeds");
  add_common(sw, common, false);
  sw->add_option("-a,--axis", axis, "traffic_multiplier | max_delay | omega")->required();
  sw->add_option("-v,--values", values, "axis values (default: from the config)");
  sw->add_option("-m,--methods", methods, "methods (default: the config method)");
  std::vector<std::string> inputs;
  std::string report_out;
  auto* rp = app.add_subcommand("report", "plots and summaries from logs");
  rp->add_option("inputs", inputs, "run directories or CSV logs")->required();
  rp->add_option("-o,--out", report_out, "report directory");

  std::string command = "edgeslice";
  try {
    app.parse(argc, argv);
    command = app.get_subcommands().front()->get_name();
    if (prep->parsed()) prepare_traffic(common);
    if (tp->parsed()) train_predictor(common);
    if (ta->parsed()) train_agent(common);
    if (rn->parsed()) run(common, trace);
    if (sw->parsed()) sweep(common, axis, values, methods);
    if (rp->parsed()) report(inputs, report_out);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << nlohmann::json{{"error", e.what()}, {"command", command}, {"kind", "usage"}}.dump() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", e.what()}, {"command", command}}.dump() << '\n';
    return 1;
  }
  return 0;
}
