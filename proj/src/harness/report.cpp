#include "edgeslice/harness/report.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace edgeslice::harness {

MeanSd mean_sd(const std::vector<double>& values) {
  MeanSd out;
  out.n = values.size();
  if (values.empty()) return out;
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string color(std::size_t i) { return kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))]; }

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(4) << v;
  return s.str();
}

struct Frame {
  double width = 640, height = 400;
  double left = 70, right = 150, top = 40, bottom = 60;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;

  double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
  double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }
};

// Pads a value range and makes it non-degenerate.
std::pair<double, double> pad_range(double lo, double hi, bool include_zero) {
  if (include_zero) {
    lo = std::min(lo, 0.0);
    hi = std::max(hi, 0.0);
  }
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double pad = 0.05 * (hi - lo);
  return {include_zero && lo == 0.0 ? 0.0 : lo - pad, hi + pad};
}

class Svg {
 public:
  explicit Svg(const Frame& f) : f_(f) {
    out_ << std::setprecision(6);
    out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\"" << f.height
         << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out_ << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  }

  void title(const std::string& t) {
    text(f_.width / 2, 22, t, "middle", 14);
  }

  void axes(const std::string& xlabel, const std::string& ylabel) {
    line(f_.left, f_.py(f_.y0), f_.width - f_.right, f_.py(f_.y0), "black");
    line(f_.left, f_.top, f_.left, f_.height - f_.bottom, "black");
    for (int k = 0; k <= 4; ++k) {
      const double y = f_.y0 + (f_.y1 - f_.y0) * k / 4.0;
      line(f_.left - 4, f_.py(y), f_.left, f_.py(y), "black");
      text(f_.left - 6, f_.py(y) + 4, fmt(y), "end", 10);
    }
    text((f_.left + f_.width - f_.right) / 2, f_.height - 15, xlabel, "middle", 12);
    out_ << "<text x=\"16\" y=\"" << (f_.top + f_.height - f_.bottom) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
         << (f_.top + f_.height - f_.bottom) / 2 << ")\">" << ylabel << "</text>\n";
  }

  void xtick(double x, const std::string& label) {
    line(f_.px(x), f_.py(f_.y0), f_.px(x), f_.py(f_.y0) + 4, "black");
    text(f_.px(x), f_.py(f_.y0) + 16, label, "middle", 10);
  }

  void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1.0) {
    out_ << "<line x1=\"" << x1 << "\" y1=\"" << y1 << "\" x2=\"" << x2 << "\" y2=\"" << y2 << "\" stroke=\""
         << stroke << "\" stroke-width=\"" << width << "\"/>\n";
  }

  void rect(double x, double y, double w, double h, const std::string& fill) {
    if (h < 0) {
      y += h;
      h = -h;
    }
    out_ << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << h << "\" fill=\"" << fill
         << "\"/>\n";
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke) {
    out_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : pts) out_ << f_.px(x) << ',' << f_.py(y) << ' ';
    out_ << "\"/>\n";
  }

  void band(const std::vector<double>& xs, const std::vector<double>& lo, const std::vector<double>& hi,
            const std::string& fill) {
    out_ << "<polygon fill=\"" << fill << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) out_ << f_.px(xs[i]) << ',' << f_.py(hi[i]) << ' ';
    for (std::size_t i = xs.size(); i-- > 0;) out_ << f_.px(xs[i]) << ',' << f_.py(lo[i]) << ' ';
    out_ << "\"/>\n";
  }

  void legend(std::size_t index, const std::string& label, const std::string& fill) {
    const double x = f_.width - f_.right + 12;
    const double y = f_.top + 18.0 * static_cast<double>(index);
    rect(x, y, 12, 12, fill);
    text(x + 18, y + 10, label, "start", 11);
  }

  void text(double x, double y, const std::string& s, const std::string& anchor, int size) {
    out_ << "<text x=\"" << x << "\" y=\"" << y << "\" text-anchor=\"" << anchor << "\" font-size=\"" << size
         << "\">" << s << "</text>\n";
  }

  void save(const std::filesystem::path& file, ReportFiles& files) {
    out_ << "</svg>\n";
    std::ofstream f(file);
    if (!f) throw std::runtime_error("cannot write " + file.string());
    f << out_.str();
    files.files.push_back(file);
  }

  const Frame& frame() const { return f_; }

 private:
  Frame f_;
  std::ostringstream out_;
};

struct BarGroup {
  std::string label;
  MeanSd value;
};

void bar_chart(const std::vector<BarGroup>& bars, const std::string& title, const std::string& ylabel,
               const std::filesystem::path& file, ReportFiles& files) {
  Frame f;
  double lo = 0, hi = 0;
  for (const auto& b : bars) {
    lo = std::min(lo, b.value.mean - b.value.sd);
    hi = std::max(hi, b.value.mean + b.value.sd);
  }
  std::tie(f.y0, f.y1) = pad_range(lo, hi, true);
  f.x0 = 0;
  f.x1 = static_cast<double>(bars.size());
  Svg svg(f);
  svg.title(title);
  svg.axes("method", ylabel);
  const double slot = f.px(1) - f.px(0);
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double cx = f.px(static_cast<double>(i) + 0.5);
    const auto& v = bars[i].value;
    svg.rect(cx - slot * 0.3, f.py(0), slot * 0.6, f.py(v.mean) - f.py(0), color(i));
    if (v.n > 1) {
      svg.line(cx, f.py(v.mean - v.sd), cx, f.py(v.mean + v.sd), "black");
      svg.line(cx - 5, f.py(v.mean - v.sd), cx + 5, f.py(v.mean - v.sd), "black");
      svg.line(cx - 5, f.py(v.mean + v.sd), cx + 5, f.py(v.mean + v.sd), "black");
    }
    svg.xtick(static_cast<double>(i) + 0.5, bars[i].label);
  }
  svg.save(file, files);
}

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<MeanSd> y;
};

void line_chart(const std::vector<Series>& series, const std::string& title, const std::string& xlabel,
                const std::string& ylabel, const std::filesystem::path& file, ReportFiles& files) {
  Frame f;
  double xlo = 1e300, xhi = -1e300, ylo = 1e300, yhi = -1e300;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xlo = std::min(xlo, s.x[i]);
      xhi = std::max(xhi, s.x[i]);
      ylo = std::min(ylo, s.y[i].mean - s.y[i].sd);
      yhi = std::max(yhi, s.y[i].mean + s.y[i].sd);
    }
  }
  if (!(xhi > xlo)) {
    xlo -= 0.5;
    xhi += 0.5;
  }
  f.x0 = xlo;
  f.x1 = xhi;
  std::tie(f.y0, f.y1) = pad_range(ylo, yhi, false);
  Svg svg(f);
  svg.title(title);
  svg.axes(xlabel, ylabel);
  std::vector<double> ticks;
  for (const auto& s : series) ticks.insert(ticks.end(), s.x.begin(), s.x.end());
  std::sort(ticks.begin(), ticks.end());
  ticks.erase(std::unique(ticks.begin(), ticks.end()), ticks.end());
  if (ticks.size() > 10) {
    std::vector<double> thin;
    for (int k = 0; k <= 5; ++k) thin.push_back(xlo + (xhi - xlo) * k / 5.0);
    ticks = thin;
  }
  for (double t : ticks) svg.xtick(t, fmt(t));
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    std::vector<double> lo, hi;
    std::vector<std::pair<double, double>> pts;
    bool any_sd = false;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      lo.push_back(s.y[i].mean - s.y[i].sd);
      hi.push_back(s.y[i].mean + s.y[i].sd);
      pts.emplace_back(s.x[i], s.y[i].mean);
      any_sd = any_sd || s.y[i].n > 1;
    }
    if (any_sd) svg.band(s.x, lo, hi, color(k));
    svg.polyline(pts, color(k));
    svg.legend(k, s.label, color(k));
  }
  svg.save(file, files);
}

void write_summaries(const std::vector<MetricsLog>& logs, const std::filesystem::path& dir, ReportFiles& files) {
  std::map<std::string, std::vector<Metrics>> by_method;
  std::vector<std::string> order;
  for (const auto& log : logs) {
    if (!by_method.count(log.method)) order.push_back(log.method);
    by_method[log.method].push_back(compute_metrics(log));
  }
  using Field = double Metrics::*;
  const std::vector<std::pair<std::string, Field>> fields{
      {"profit", &Metrics::profit},       {"revenue", &Metrics::revenue},           {"cost", &Metrics::cost},
      {"ru", &Metrics::ru},               {"dvr", &Metrics::dvr},                   {"mean_upload_s", &Metrics::mean_upload_s},
      {"mean_queue_s", &Metrics::mean_queue_s}, {"mean_exec_s", &Metrics::mean_exec_s}};

  std::ofstream csv(dir / "summary.csv");
  std::ofstream txt(dir / "summary.txt");
  if (!csv || !txt) throw std::runtime_error("cannot write summary in " + dir.string());
  csv << std::setprecision(12) << "method,runs";
  for (const auto& [name, field] : fields) csv << ',' << name << "_mean," << name << "_sd";
  csv << '\n';
  txt << std::fixed << std::setprecision(4);
  for (const auto& method : order) {
    const auto& ms = by_method[method];
    csv << method << ',' << ms.size();
    txt << method << " (" << ms.size() << (ms.size() == 1 ? " run)\n" : " runs)\n");
    for (const auto& [name, field] : fields) {
      std::vector<double> v;
      for (const auto& m : ms) v.push_back(m.*field);
      const auto s = mean_sd(v);
      csv << ',' << s.mean << ',' << s.sd;
      txt << "  " << std::left << std::setw(14) << name << std::right << std::setw(14) << s.mean << " +- " << s.sd
          << '\n';
    }
    const bool undefined = std::any_of(ms.begin(), ms.end(), [](const Metrics& m) { return !m.dvr_defined; });
    if (undefined) txt << "  note: some runs had no tasks; their DVR is reported as 0\n";
    csv << '\n';
  }
  files.files.push_back(dir / "summary.csv");
  files.files.push_back(dir / "summary.txt");

  std::vector<BarGroup> profit;
  for (const auto& method : order) {
    std::vector<double> v;
    for (const auto& m : by_method[method]) v.push_back(m.profit);
    profit.push_back({method, mean_sd(v)});
  }
  bar_chart(profit, "Profit per method", "profit", dir / "profit.svg", files);

  // Time breakdown: stacked mean upload, queue and execution time per method.
  Frame f;
  double top = 0.0;
  std::vector<std::array<double, 3>> parts;
  for (const auto& method : order) {
    std::array<double, 3> p{0, 0, 0};
    for (const auto& m : by_method[method]) {
      p[0] += m.mean_upload_s;
      p[1] += m.mean_queue_s;
      p[2] += m.mean_exec_s;
    }
    for (double& x : p) x /= static_cast<double>(by_method[method].size());
    top = std::max(top, p[0] + p[1] + p[2]);
    parts.push_back(p);
  }
  std::tie(f.y0, f.y1) = pad_range(0.0, top, true);
  f.x1 = static_cast<double>(order.size());
  Svg svg(f);
  svg.title("Mean task time breakdown");
  svg.axes("method", "seconds");
  const double slot = f.px(1) - f.px(0);
  const char* names[] = {"upload", "queue", "execution"};
  for (std::size_t i = 0; i < order.size(); ++i) {
    const double cx = f.px(static_cast<double>(i) + 0.5);
    double base = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      svg.rect(cx - slot * 0.3, f.py(base + parts[i][k]), slot * 0.6, f.py(base) - f.py(base + parts[i][k]),
               color(k));
      base += parts[i][k];
    }
    svg.xtick(static_cast<double>(i) + 0.5, order[i]);
  }
  for (std::size_t k = 0; k < 3; ++k) svg.legend(k, names[k], color(k));
  svg.save(dir / "time_breakdown.svg", files);
}

void write_convergence(const std::vector<agent::EpisodeRecord>& curve, const std::filesystem::path& dir,
                       ReportFiles& files) {
  std::map<int, Series> by_agent;
  for (const auto& r : curve) {
    auto& s = by_agent[r.agent_id];
    s.label = "agent " + std::to_string(r.agent_id);
    s.x.push_back(r.episode);
    s.y.push_back({r.reward, 0.0, 1});
  }
  std::vector<Series> series;
  for (auto& [id, s] : by_agent) series.push_back(std::move(s));
  line_chart(series, "Episode reward", "episode", "reward", dir / "convergence.svg", files);
}

void write_sweep_plots(const std::vector<SweepRow>& rows, const std::filesystem::path& dir, ReportFiles& files) {
  std::map<std::string, std::vector<const SweepRow*>> by_axis;
  for (const auto& r : rows) by_axis[r.axis].push_back(&r);
  using Field = double Metrics::*;
  const std::vector<std::pair<std::string, Field>> metrics{
      {"profit", &Metrics::profit}, {"ru", &Metrics::ru}, {"dvr", &Metrics::dvr}};
  for (const auto& [axis, axis_rows] : by_axis) {
    for (const auto& [name, field] : metrics) {
      std::map<std::string, std::map<double, std::vector<double>>> grid;
      for (const auto* r : axis_rows) grid[r->method][r->value].push_back(r->metrics.*field);
      std::vector<Series> series;
      for (const auto& [method, cells] : grid) {
        Series s;
        s.label = method;
        for (const auto& [x, v] : cells) {
          s.x.push_back(x);
          s.y.push_back(mean_sd(v));
        }
        series.push_back(std::move(s));
      }
      line_chart(series, name + " vs " + axis, axis, name, dir / ("sweep_" + axis + "_" + name + ".svg"), files);
    }
    // Per-region profit, one curve per region and method.
    std::map<std::string, std::map<double, std::vector<double>>> grid;
    for (const auto* r : axis_rows) {
      for (const auto& [id, p] : r->metrics.region_profit) {
        grid[r->method + " R" + std::to_string(id)][r->value].push_back(p);
      }
    }
    if (!grid.empty()) {
      std::vector<Series> series;
      for (const auto& [label, cells] : grid) {
        Series s;
        s.label = label;
        for (const auto& [x, v] : cells) {
          s.x.push_back(x);
          s.y.push_back(mean_sd(v));
        }
        series.push_back(std::move(s));
      }
      line_chart(series, "region profit vs " + axis, axis, "profit", dir / ("sweep_" + axis + "_region_profit.svg"),
                 files);
    }
  }
}

}  // namespace

ReportFiles report(const ReportInputs& inputs, const std::filesystem::path& out_dir) {
  if (inputs.logs.empty() && inputs.sweep_rows.empty() && inputs.reward_curve.empty()) {
    throw std::invalid_argument("report: no logs to report");
  }
  std::filesystem::create_directories(out_dir);
  ReportFiles files;
  if (!inputs.logs.empty()) write_summaries(inputs.logs, out_dir, files);
  if (!inputs.reward_curve.empty()) write_convergence(inputs.reward_curve, out_dir, files);
  if (!inputs.sweep_rows.empty()) write_sweep_plots(inputs.sweep_rows, out_dir, files);
  return files;
}

std::vector<agent::EpisodeRecord> read_reward_curve(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("episode,agent_id,reward", 0) != 0) throw std::runtime_error("not a reward curve: " + file.string());
  std::vector<agent::EpisodeRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> f;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 5) throw std::runtime_error("malformed reward row in " + file.string());
    out.push_back({std::stoi(f[0]), std::stoi(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4])});
  }
  return out;
}

}  // namespace edgeslice::harness
