#pragma once

// Summary tables and SVG plots from metric logs, sweep tables and reward curves.

#include "edgeslice/agent/agent.hpp"
#include "edgeslice/harness/experiment.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace edgeslice::harness {

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, 0 for a single value
  std::size_t n = 0;
};

MeanSd mean_sd(const std::vector<double>& values);

struct ReportInputs {
  std::vector<MetricsLog> logs;
  std::vector<SweepRow> sweep_rows;
  std::vector<agent::EpisodeRecord> reward_curve;
};

/// Files written by report(), in the order they were written.
struct ReportFiles {
  std::vector<std::filesystem::path> files;
};

/// Writes summary.csv, summary.txt, profit.svg and time_breakdown.svg for the logs,
/// convergence.svg for a reward curve and sweep_<axis>_<metric>.svg for sweep rows.
/// Throws when there is nothing to report.
ReportFiles report(const ReportInputs& inputs, const std::filesystem::path& out_dir);

std::vector<agent::EpisodeRecord> read_reward_curve(const std::filesystem::path& file);

}  // namespace edgeslice::harness
