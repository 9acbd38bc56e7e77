#include "edgeslice/traffic/traffic.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string_view>

namespace edgeslice::traffic {

void TrafficSeries::validate(int slots_per_long) const {
  if (counts.size() != region_ids.size()) throw std::invalid_argument("TrafficSeries: region/count mismatch");
  const std::size_t n = length();
  for (const auto& row : counts) {
    if (row.size() != n) throw std::invalid_argument("TrafficSeries: regions must have equal length");
    for (int c : row) {
      if (c < 0) throw std::invalid_argument("TrafficSeries: negative count");
    }
  }
  if (slots_per_long > 0 && n % static_cast<std::size_t>(slots_per_long) != 0) {
    throw std::invalid_argument("TrafficSeries: length not divisible by short slots per long slot");
  }
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  char delim = 0;
  for (char c : {'\t', ',', ';'}) {
    if (line.find(c) != std::string_view::npos) {
      delim = c;
      break;
    }
  }
  if (delim != 0) {
    std::size_t start = 0;
    while (true) {
      const auto pos = line.find(delim, start);
      out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
      if (pos == std::string_view::npos) break;
      start = pos + 1;
    }
  } else {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ')) ++i;
      const std::size_t j = line.find(' ', i);
      if (i < line.size()) out.push_back(line.substr(i, j == std::string_view::npos ? std::string_view::npos : j - i));
      i = (j == std::string_view::npos) ? line.size() : j;
    }
  }
  for (auto& f : out) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '"')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '"' || f.back() == '\r')) f.remove_suffix(1);
  }
  return out;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  T value{};
  if (s.empty()) return std::nullopt;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

int round_half_away(double x) { return static_cast<int>(std::round(x)); }

}  // namespace

IngestResult ingest_raw(const std::filesystem::path& file, const std::vector<std::int64_t>& selected_cells) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("ingest_raw: cannot open " + file.string());
  if (selected_cells.empty()) throw std::invalid_argument("ingest_raw: no cells selected");

  std::map<std::int64_t, std::size_t> wanted;
  for (std::size_t i = 0; i < selected_cells.size(); ++i) wanted.emplace(selected_cells[i], i);

  // (cell index) -> timestamp -> summed activity
  std::vector<std::map<std::int64_t, double>> rows(selected_cells.size());
  IngestResult result;
  std::string line;
  bool first_content_line = true;
  while (std::getline(in, line)) {
    std::string_view view(line);
    if (view.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const auto fields = split_fields(view);
    const auto cell = fields.size() >= 3 ? parse_number<std::int64_t>(fields[0]) : std::nullopt;
    if (first_content_line && !cell) {
      first_content_line = false;  // header
      continue;
    }
    first_content_line = false;
    const auto ts = fields.size() >= 3 ? parse_number<std::int64_t>(fields[1]) : std::nullopt;
    const auto activity = fields.size() >= 3 ? parse_number<double>(fields.back()) : std::nullopt;
    if (!cell || !ts || !activity || *activity < 0 || !std::isfinite(*activity)) {
      ++result.skipped_rows;
      continue;
    }
    auto it = wanted.find(*cell);
    if (it == wanted.end()) continue;
    rows[it->second][*ts] += *activity;
  }

  std::int64_t t0 = std::numeric_limits<std::int64_t>::max();
  std::int64_t t1 = std::numeric_limits<std::int64_t>::min();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].empty()) {
      throw std::invalid_argument("ingest_raw: cell " + std::to_string(selected_cells[i]) + " not found in file");
    }
    t0 = std::min(t0, rows[i].begin()->first);
    t1 = std::max(t1, rows[i].rbegin()->first);
  }
  const auto length = static_cast<std::size_t>((t1 - t0) / kSlotMillis + 1);

  result.series.cell_ids = selected_cells;
  result.series.start_timestamp_ms = t0;
  result.series.activity.assign(rows.size(), std::vector<double>(length, 0.0));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::vector<bool> seen(length, false);
    for (const auto& [ts, value] : rows[i]) {
      const auto slot = static_cast<std::size_t>((ts - t0) / kSlotMillis);
      result.series.activity[i][slot] += value;
      seen[slot] = true;
    }
    result.filled_gaps += static_cast<std::size_t>(std::count(seen.begin(), seen.end(), false));
  }
  return result;
}

namespace {

std::vector<int> rescale_row(const std::vector<double>& row, int lo, int hi) {
  if (!(hi > lo && lo >= 0)) throw std::invalid_argument("rescale: need hi > lo >= 0");
  std::vector<int> out(row.size(), lo);
  if (row.empty()) return out;
  const auto [mn, mx] = std::minmax_element(row.begin(), row.end());
  const double span = *mx - *mn;
  if (!(span > 0)) return out;
  for (std::size_t k = 0; k < row.size(); ++k) {
    out[k] = round_half_away(lo + (row[k] - *mn) * (hi - lo) / span);
  }
  return out;
}

}  // namespace

TrafficSeries rescale(const RawTraffic& raw, int lo, int hi) {
  TrafficSeries out;
  out.slot_duration_s = raw.slot_duration_s;
  for (std::size_t r = 0; r < raw.activity.size(); ++r) {
    out.region_ids.push_back(static_cast<int>(r));
    out.counts.push_back(rescale_row(raw.activity[r], lo, hi));
  }
  return out;
}

TrafficSeries rescale(const TrafficSeries& series, int lo, int hi) {
  TrafficSeries out;
  out.slot_duration_s = series.slot_duration_s;
  out.region_ids = series.region_ids;
  for (const auto& row : series.counts) {
    out.counts.push_back(rescale_row(std::vector<double>(row.begin(), row.end()), lo, hi));
  }
  return out;
}

TrafficSeries synthesize(const SynthesisParams& p) {
  if (p.regions < 1 || p.days < 1 || p.slots_per_day < 1) throw std::invalid_argument("synthesize: bad sizes");
  if (p.base - p.amplitude - 3.0 * p.noise_sd < 0.0) {
    throw std::invalid_argument("synthesize: base - amplitude - 3 sd must stay non-negative");
  }
  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  TrafficSeries out;
  const std::size_t n = static_cast<std::size_t>(p.days) * static_cast<std::size_t>(p.slots_per_day);
  for (int r = 0; r < p.regions; ++r) {
    out.region_ids.push_back(r);
    const double phase = 2.0 * std::numbers::pi * r / p.regions;
    std::vector<int> row(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(k % p.slots_per_day) / p.slots_per_day;
      double v = p.base + p.amplitude * std::sin(angle + phase);
      if (p.noise_sd > 0) v += p.noise_sd * noise(rng);
      row[k] = round_half_away(std::max(0.0, v));
    }
    out.counts.push_back(std::move(row));
  }
  return out;
}

TrafficSeries synthesize_step(std::uint64_t seed, int regions, int days, int low, int high, int step_slot,
                              double noise_sd, int slots_per_day) {
  if (regions < 1 || days < 1 || step_slot < 0 || step_slot > slots_per_day || low < 0 || high < 0) {
    throw std::invalid_argument("synthesize_step: bad arguments");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  TrafficSeries out;
  const std::size_t n = static_cast<std::size_t>(days) * static_cast<std::size_t>(slots_per_day);
  for (int r = 0; r < regions; ++r) {
    out.region_ids.push_back(r);
    std::vector<int> row(n);
    for (std::size_t k = 0; k < n; ++k) {
      double v = static_cast<int>(k % slots_per_day) < step_slot ? low : high;
      if (noise_sd > 0) v += noise_sd * noise(rng);
      row[k] = round_half_away(std::max(0.0, v));
    }
    out.counts.push_back(std::move(row));
  }
  return out;
}

TrafficSeries scale(const TrafficSeries& series, double multiplier, int cap) {
  if (!(multiplier >= 0)) throw std::invalid_argument("scale: multiplier must be non-negative");
  TrafficSeries out = series;
  for (auto& row : out.counts) {
    for (int& c : row) c = std::min(cap, round_half_away(c * multiplier));
  }
  return out;
}

TrafficSeries slice(const TrafficSeries& series, std::size_t begin, std::size_t end) {
  if (begin > end || end > series.length()) throw std::out_of_range("slice: bad range");
  TrafficSeries out;
  out.region_ids = series.region_ids;
  out.slot_duration_s = series.slot_duration_s;
  for (const auto& row : series.counts) {
    out.counts.emplace_back(row.begin() + static_cast<std::ptrdiff_t>(begin),
                            row.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

void write_canonical(const TrafficSeries& series, const std::filesystem::path& file) {
  series.validate();
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw std::runtime_error("write_canonical: cannot open " + file.string());
  out << "region_id,slot_index,count\n";
  for (std::size_t r = 0; r < series.regions(); ++r) {
    for (std::size_t k = 0; k < series.length(); ++k) {
      out << series.region_ids[r] << ',' << k << ',' << series.counts[r][k] << '\n';
    }
  }
}

TrafficSeries read_canonical(const std::filesystem::path& file, double slot_duration_s) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("read_canonical: cannot open " + file.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("region_id,slot_index,count", 0) != 0) {
    throw std::runtime_error("read_canonical: unexpected header in " + file.string());
  }
  std::map<int, std::map<std::size_t, int>> data;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_fields(line);
    const auto region = f.size() == 3 ? parse_number<int>(f[0]) : std::nullopt;
    const auto slot = f.size() == 3 ? parse_number<std::size_t>(f[1]) : std::nullopt;
    const auto count = f.size() == 3 ? parse_number<int>(f[2]) : std::nullopt;
    if (!region || !slot || !count) {
      throw std::runtime_error("read_canonical: malformed line " + std::to_string(line_no));
    }
    data[*region][*slot] = *count;
  }
  TrafficSeries out;
  out.slot_duration_s = slot_duration_s;
  for (const auto& [region, slots] : data) {
    out.region_ids.push_back(region);
    std::vector<int> row(slots.size());
    std::size_t expected = 0;
    for (const auto& [slot, count] : slots) {
      if (slot != expected++) throw std::runtime_error("read_canonical: slot indices not contiguous");
      row[slot] = count;
    }
    out.counts.push_back(std::move(row));
  }
  out.validate();
  return out;
}

}  // namespace edgeslice::traffic
