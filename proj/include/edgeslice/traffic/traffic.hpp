#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace edgeslice::traffic {

inline constexpr double kDefaultSlotSeconds = 600.0;
inline constexpr std::int64_t kSlotMillis = 600'000;

/// Real-valued activity per cell, aligned on the 10-minute grid.
struct RawTraffic {
  std::vector<std::int64_t> cell_ids;
  std::vector<std::vector<double>> activity;
  std::int64_t start_timestamp_ms = 0;
  double slot_duration_s = kDefaultSlotSeconds;

  std::size_t length() const { return activity.empty() ? 0 : activity.front().size(); }
};

/// Integer request counts per region and short slot.
struct TrafficSeries {
  std::vector<int> region_ids;
  std::vector<std::vector<int>> counts;
  double slot_duration_s = kDefaultSlotSeconds;

  std::size_t regions() const { return region_ids.size(); }
  std::size_t length() const { return counts.empty() ? 0 : counts.front().size(); }
  /// Checks equal lengths, non-negative counts and (when slots_per_long > 0) divisibility.
  void validate(int slots_per_long = 0) const;
  bool operator==(const TrafficSeries&) const = default;
};

struct IngestResult {
  RawTraffic series;
  std::size_t skipped_rows = 0;
  std::size_t filled_gaps = 0;
  std::size_t warnings() const { return skipped_rows + filled_gaps; }
};

/// Reads delimiter-separated rows `cell_id, timestamp_ms, ..., internet_activity`
/// (tab, comma, semicolon or whitespace). The activity is the last column, so both
/// three-column files and wider dumps with extra activity columns are accepted.
/// Rows sharing (cell, interval) are summed.
IngestResult ingest_raw(const std::filesystem::path& file, const std::vector<std::int64_t>& selected_cells);

/// Per-region min-max map onto [lo, hi], rounded half away from zero.
/// A constant region maps to `lo`.
TrafficSeries rescale(const RawTraffic& raw, int lo = 2, int hi = 10);
TrafficSeries rescale(const TrafficSeries& series, int lo = 2, int hi = 10);

struct SynthesisParams {
  std::uint64_t seed = 1;
  int regions = 3;
  int days = 30;
  double base = 6.0;
  double amplitude = 4.0;
  double noise_sd = 0.5;
  int slots_per_day = 144;
};

/// Daily sinusoid per region with a region-specific phase, Gaussian noise,
/// clipped at 0 and rounded.
TrafficSeries synthesize(const SynthesisParams& params);

/// Piecewise-constant daily pattern: `low` before `step_slot` of every day and
/// `high` from it on, plus optional rounded noise. Used for traffic-step scenarios.
TrafficSeries synthesize_step(std::uint64_t seed, int regions, int days, int low, int high, int step_slot,
                              double noise_sd, int slots_per_day = 144);

/// Multiplies every count and clips to `cap`.
TrafficSeries scale(const TrafficSeries& series, double multiplier, int cap);

/// Slots [begin, end) of every region.
TrafficSeries slice(const TrafficSeries& series, std::size_t begin, std::size_t end);

/// Canonical CSV: `region_id,slot_index,count`.
void write_canonical(const TrafficSeries& series, const std::filesystem::path& file);
TrafficSeries read_canonical(const std::filesystem::path& file, double slot_duration_s = kDefaultSlotSeconds);

}  // namespace edgeslice::traffic
