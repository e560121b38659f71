#include "dcount/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace dcount {

namespace {

std::string real17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed3(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return std::string(buf) == "-0.000" ? "0.000" : buf;
}

std::string short_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> parts;
  std::string current;
  for (char c : text) {
    if (c == sep) {
      parts.push_back(current);
      current.clear();
    } else {
      current += c;
    }
  }
  parts.push_back(current);
  return parts;
}

double parse_real(const std::string& token) {
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (token.empty() || *end != '\0') throw std::runtime_error("csv: bad number '" + token + "'");
  return v;
}

const char* model_color(ModelKind kind) {
  switch (kind) {
    case ModelKind::baseline_sum: return "#1f77b4";
    case ModelKind::nms: return "#2ca02c";
    case ModelKind::counting: return "#d62728";
  }
  return "#000000";
}

const char* dash_pattern(std::size_t index) {
  static const char* patterns[] = {"", "6,3", "2,2", "8,3,2,3", "1,3"};
  return patterns[index % 5];
}

// Blue (t = 0) through green to red (t = 1).
std::string ramp_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const double hue = 240.0 * (1.0 - t);
  const double x = 1.0 - std::abs(std::fmod(hue / 60.0, 2.0) - 1.0);
  double r = 0, g = 0, b = 0;
  if (hue < 60) { r = 1; g = x; }
  else if (hue < 120) { r = x; g = 1; }
  else if (hue < 180) { g = 1; b = x; }
  else { g = x; b = 1; }
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(r * 200)),
                static_cast<int>(std::lround(g * 200)), static_cast<int>(std::lround(b * 200)));
  return buf;
}

}  // namespace

std::string_view to_string(SweepAxis axis) {
  return axis == SweepAxis::side ? "l" : "q";
}

SweepAxis parse_sweep_axis(std::string_view name) {
  if (name == "l") return SweepAxis::side;
  if (name == "q") return SweepAxis::noise;
  throw std::invalid_argument("sweep axis must be 'l' or 'q', got '" + std::string(name) + "'");
}

void SweepSpec::validate() const {
  if (!(start <= stop)) throw std::invalid_argument("sweep range needs start <= stop");
  if (!(step > 0.0)) throw std::invalid_argument("sweep step must be positive");
  if (models.empty()) throw std::invalid_argument("sweep needs at least one model");
  if (seeds.empty()) throw std::invalid_argument("sweep needs at least one seed");
  if (fixed.empty()) throw std::invalid_argument("sweep needs at least one fixed value");
  if (eval_size <= 0) throw std::invalid_argument("eval size must be positive");
  if (jobs <= 0) throw std::invalid_argument("jobs must be positive");
  train.validate();
  for (double v : grid()) {
    for (double f : fixed) {
      ToyConfig toy;
      toy.side = vary == SweepAxis::side ? v : f;
      toy.noise = vary == SweepAxis::side ? f : v;
      toy.n_boxes = n_boxes;
      toy.max_count = max_count;
      toy.validate();
    }
  }
}

std::vector<double> SweepSpec::grid() const {
  std::vector<double> values;
  const auto count = static_cast<long>(std::floor((stop - start) / step + 1e-9)) + 1;
  for (long i = 0; i < count; ++i) {
    const double v = start + static_cast<double>(i) * step;
    values.push_back(std::round(v * 1e12) / 1e12);
  }
  return values;
}

bool SweepRow::failed() const {
  return std::isnan(loss);
}

bool SweepRow::operator==(const SweepRow& o) const {
  const auto same = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
  return model == o.model && same(l, o.l) && same(q, o.q) && seed == o.seed && same(accuracy, o.accuracy) &&
         same(loss, o.loss) && same(seconds, o.seconds);
}

std::vector<SweepRow> run_sweep(const SweepSpec& spec, std::vector<std::optional<Checkpoint>>* checkpoints) {
  spec.validate();
  struct Job {
    SweepRow row;
  };
  std::vector<Job> jobs;
  for (double f : spec.fixed) {
    for (double v : spec.grid()) {
      for (ModelKind model : spec.models) {
        for (std::uint64_t seed : spec.seeds) {
          SweepRow row;
          row.model = model;
          row.l = spec.vary == SweepAxis::side ? v : f;
          row.q = spec.vary == SweepAxis::side ? f : v;
          row.seed = seed;
          jobs.push_back({row});
        }
      }
    }
  }

  std::vector<SweepRow> rows(jobs.size());
  std::vector<std::optional<Checkpoint>> trained(jobs.size());
  std::mutex log_mutex;

  const auto run_job = [&](std::size_t j) {
    SweepRow row = jobs[j].row;
    ToyConfig toy;
    toy.side = row.l;
    toy.noise = row.q;
    toy.n_boxes = spec.n_boxes;
    toy.max_count = spec.max_count;
    toy.seed = row.seed;
    TrainConfig cfg = spec.train;
    cfg.seed = row.seed;
    const auto start = std::chrono::steady_clock::now();
    try {
      TrainObserver observer;
      if (spec.on_iteration) {
        observer = [&](int it, double loss, double seconds) { spec.on_iteration(row, it, loss, seconds); };
      }
      TrainResult result = train(row.model, toy, cfg, observer);
      row.accuracy = evaluate(result.checkpoint, toy, spec.eval_size, spec.split, cfg.nms_threshold);
      row.loss = result.final_loss;
      trained[j] = std::move(result.checkpoint);
    } catch (const std::exception& e) {
      row.accuracy = 0.0;
      row.loss = std::nan("");
      std::lock_guard<std::mutex> lock(log_mutex);
      std::fprintf(stderr, "sweep: %s l=%g q=%g seed=%llu failed: %s\n", std::string(to_string(row.model)).c_str(),
                   row.l, row.q, static_cast<unsigned long long>(row.seed), e.what());
    }
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    if (spec.record_time) row.seconds = elapsed.count();
    if (spec.on_row) spec.on_row(row, elapsed.count());
    rows[j] = row;
  };

  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(spec.jobs), jobs.size());
  if (workers <= 1) {
    for (std::size_t j = 0; j < jobs.size(); ++j) run_job(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t j = next++; j < jobs.size(); j = next++) run_job(j);
      });
    }
    for (auto& t : pool) t.join();
  }
  if (checkpoints) *checkpoints = std::move(trained);
  return rows;
}

std::string format_csv(const std::vector<SweepRow>& rows, const std::vector<std::string>& comments) {
  std::string out;
  for (const auto& c : comments) out += "# " + c + "\n";
  out += kCsvHeader;
  out += "\n";
  for (const SweepRow& r : rows) {
    out += std::string(to_string(r.model)) + "," + real17(r.l) + "," + real17(r.q) + "," + std::to_string(r.seed) +
           "," + real17(r.accuracy) + "," + real17(r.loss) + "," + real17(r.seconds) + "\n";
  }
  return out;
}

std::vector<SweepRow> parse_csv(std::string_view text) {
  std::vector<SweepRow> rows;
  bool header_seen = false;
  for (const std::string& line : split(text, '\n')) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != kCsvHeader) throw std::runtime_error("csv: unexpected header '" + line + "'");
      header_seen = true;
      continue;
    }
    const auto fields = split(line, ',');
    if (fields.size() != 7) throw std::runtime_error("csv: expected 7 fields in '" + line + "'");
    SweepRow r;
    r.model = parse_model_kind(fields[0]);
    r.l = parse_real(fields[1]);
    r.q = parse_real(fields[2]);
    r.seed = std::stoull(fields[3]);
    r.accuracy = parse_real(fields[4]);
    r.loss = parse_real(fields[5]);
    r.seconds = parse_real(fields[6]);
    rows.push_back(r);
  }
  if (!header_seen) throw std::runtime_error("csv: missing header");
  return rows;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path,
               const std::vector<std::string>& comments) {
  write_text_file(path, format_csv(rows, comments));
}

std::vector<SweepRow> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_csv(text.str());
}

std::vector<ShapeCurve> sample_shapes(const PlinBank& bank, double parameter, int samples) {
  if (samples < 2) throw std::invalid_argument("need at least two samples per curve");
  std::vector<ShapeCurve> curves;
  for (std::size_t k = 0; k < kBankSize; ++k) {
    ShapeCurve curve;
    curve.function = static_cast<int>(k) + 1;
    curve.parameter = parameter;
    for (int i = 0; i < samples; ++i) {
      const double x = static_cast<double>(i) / static_cast<double>(samples - 1);
      curve.points.emplace_back(x, bank.at(k)(x));
    }
    curves.push_back(std::move(curve));
  }
  return curves;
}

std::string format_shapes_csv(const std::vector<ShapeCurve>& curves) {
  std::string out = "function,x,fx\n";
  for (const ShapeCurve& c : curves) {
    for (const auto& [x, fx] : c.points) {
      out += std::to_string(c.function) + "," + real17(x) + "," + real17(fx) + "\n";
    }
  }
  return out;
}

void dump_shapes(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_text_file(path, format_shapes_csv(sample_shapes(ckpt.bank)));
}

std::string render_line_plot(const LinePlot& plot) {
  const bool has_points = std::any_of(plot.series.begin(), plot.series.end(),
                                      [](const PlotSeries& s) { return !s.points.empty(); });
  if (!has_points) throw std::invalid_argument("cannot render a plot without data");
  if (!(plot.x_max > plot.x_min) || !(plot.y_max > plot.y_min)) throw std::invalid_argument("degenerate plot range");

  const double w = kPlotWidth - kPlotLeft - kPlotRight;
  const double h = kPlotHeight - kPlotTop - kPlotBottom;
  const auto px = [&](double x) { return kPlotLeft + (x - plot.x_min) / (plot.x_max - plot.x_min) * w; };
  const auto py = [&](double y) { return kPlotTop + (1.0 - (y - plot.y_min) / (plot.y_max - plot.y_min)) * h; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kPlotWidth << "\" height=\"" << kPlotHeight
      << "\" viewBox=\"0 0 " << kPlotWidth << " " << kPlotHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect x=\"0\" y=\"0\" width=\"" << kPlotWidth << "\" height=\"" << kPlotHeight << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << fixed3(kPlotWidth / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
      << escape_xml(plot.title) << "</text>\n";

  // Grid and tick labels at fifths of each range.
  for (int i = 0; i <= 5; ++i) {
    const double fx = plot.x_min + (plot.x_max - plot.x_min) * i / 5.0;
    const double fy = plot.y_min + (plot.y_max - plot.y_min) * i / 5.0;
    svg << "<line x1=\"" << fixed3(px(fx)) << "\" y1=\"" << fixed3(kPlotTop) << "\" x2=\"" << fixed3(px(fx))
        << "\" y2=\"" << fixed3(kPlotTop + h) << "\" stroke=\"#dddddd\"/>\n";
    svg << "<line x1=\"" << fixed3(kPlotLeft) << "\" y1=\"" << fixed3(py(fy)) << "\" x2=\"" << fixed3(kPlotLeft + w)
        << "\" y2=\"" << fixed3(py(fy)) << "\" stroke=\"#dddddd\"/>\n";
    svg << "<text x=\"" << fixed3(px(fx)) << "\" y=\"" << fixed3(kPlotTop + h + 16)
        << "\" text-anchor=\"middle\">" << short_real(fx) << "</text>\n";
    svg << "<text x=\"" << fixed3(kPlotLeft - 6) << "\" y=\"" << fixed3(py(fy) + 4) << "\" text-anchor=\"end\">"
        << short_real(fy) << "</text>\n";
  }
  svg << "<rect x=\"" << fixed3(kPlotLeft) << "\" y=\"" << fixed3(kPlotTop) << "\" width=\"" << fixed3(w)
      << "\" height=\"" << fixed3(h) << "\" fill=\"none\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << fixed3(kPlotLeft + w / 2) << "\" y=\"" << fixed3(kPlotHeight - 14)
      << "\" text-anchor=\"middle\">" << escape_xml(plot.x_label) << "</text>\n";
  svg << "<text x=\"16\" y=\"" << fixed3(kPlotTop + h / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << fixed3(kPlotTop + h / 2) << ")\">" << escape_xml(plot.y_label) << "</text>\n";

  for (const PlotSeries& s : plot.series) {
    if (s.points.empty()) continue;
    svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\"";
    if (!s.dash.empty()) svg << " stroke-dasharray=\"" << s.dash << "\"";
    svg << " points=\"";
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      if (i) svg << ' ';
      svg << fixed3(px(s.points[i].first)) << ',' << fixed3(py(s.points[i].second));
    }
    svg << "\"><title>" << escape_xml(s.label) << "</title></polyline>\n";
  }

  if (plot.legend) {
    double y = kPlotTop + 14;
    for (const PlotSeries& s : plot.series) {
      if (s.points.empty()) continue;
      const double x = kPlotLeft + w - 150;
      svg << "<line x1=\"" << fixed3(x) << "\" y1=\"" << fixed3(y - 4) << "\" x2=\"" << fixed3(x + 24) << "\" y2=\""
          << fixed3(y - 4) << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"";
      if (!s.dash.empty()) svg << " stroke-dasharray=\"" << s.dash << "\"";
      svg << "/>\n";
      svg << "<text x=\"" << fixed3(x + 30) << "\" y=\"" << fixed3(y) << "\">" << escape_xml(s.label) << "</text>\n";
      y += 16;
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

LinePlot accuracy_plot(const std::vector<SweepRow>& rows, SweepAxis vary) {
  // (model, fixed value) -> varied value -> (sum, count); std::map keeps order deterministic.
  std::map<std::pair<ModelKind, double>, std::map<double, std::pair<double, int>>> groups;
  for (const SweepRow& r : rows) {
    if (r.failed()) continue;
    const double varied = vary == SweepAxis::side ? r.l : r.q;
    const double fixed = vary == SweepAxis::side ? r.q : r.l;
    auto& cell = groups[{r.model, fixed}][varied];
    cell.first += r.accuracy;
    cell.second += 1;
  }
  if (groups.empty()) throw std::invalid_argument("no successful sweep rows to plot");

  std::map<double, std::size_t> fixed_index;
  for (const auto& [key, unused] : groups) fixed_index.emplace(key.second, 0);
  std::size_t next = 0;
  for (auto& [value, index] : fixed_index) index = next++;

  LinePlot plot;
  const std::string varied_name(to_string(vary));
  const std::string fixed_name = vary == SweepAxis::side ? "q" : "l";
  plot.title = "Toy task accuracy";
  plot.x_label = varied_name;
  plot.y_label = "accuracy";
  double lo = 1e300, hi = -1e300;
  for (const auto& [key, cells] : groups) {
    PlotSeries s;
    s.label = std::string(to_string(key.first)) + " " + fixed_name + "=" + short_real(key.second);
    s.color = model_color(key.first);
    s.dash = dash_pattern(fixed_index[key.second]);
    for (const auto& [x, acc] : cells) {
      s.points.emplace_back(x, acc.first / acc.second);
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    plot.series.push_back(std::move(s));
  }
  plot.x_min = lo < hi ? lo : lo - 0.5;
  plot.x_max = lo < hi ? hi : hi + 0.5;
  return plot;
}

LinePlot shape_plot(const std::vector<ShapeCurve>& curves, int function, const std::string& parameter_name) {
  std::vector<const ShapeCurve*> selected;
  for (const ShapeCurve& c : curves)
    if (c.function == function && !c.points.empty()) selected.push_back(&c);
  if (selected.empty()) throw std::invalid_argument("no curves for f" + std::to_string(function));
  std::stable_sort(selected.begin(), selected.end(),
                   [](const ShapeCurve* a, const ShapeCurve* b) { return a->parameter < b->parameter; });
  const double lo = selected.front()->parameter;
  const double hi = selected.back()->parameter;

  LinePlot plot;
  plot.title = "Shape of f" + std::to_string(function);
  plot.x_label = "x";
  plot.y_label = "f" + std::to_string(function) + "(x)";
  plot.legend = selected.size() <= 12;
  for (const ShapeCurve* c : selected) {
    PlotSeries s;
    s.label = parameter_name + "=" + short_real(c->parameter);
    s.color = ramp_color(hi > lo ? (c->parameter - lo) / (hi - lo) : 0.0);
    s.points = c->points;
    plot.series.push_back(std::move(s));
  }
  return plot;
}

}  // namespace dcount
