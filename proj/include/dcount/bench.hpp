#pragma once

// Experiment sweeps over the toy task and their artifacts: CSV result tables,
// activation-shape tables and standalone SVG line plots. Every output is a
// deterministic function of its inputs.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dcount/checkpoint.hpp"
#include "dcount/trainers.hpp"

namespace dcount {

enum class SweepAxis { side, noise };  // vary l or q

std::string_view to_string(SweepAxis axis);
SweepAxis parse_sweep_axis(std::string_view name);  // "l" or "q"

struct SweepRow;

struct SweepSpec {
  SweepAxis vary = SweepAxis::side;
  std::vector<double> fixed{0.0};  // values of the parameter that is not varied
  double start = 0.1;
  double stop = 0.8;
  double step = 0.1;
  std::vector<ModelKind> models{ModelKind::baseline_sum, ModelKind::counting};
  std::vector<std::uint64_t> seeds{1};
  TrainConfig train;
  int eval_size = 8192;
  EvalSplit split = EvalSplit::held_out;
  int n_boxes = 10;
  int max_count = 10;
  int jobs = 1;
  bool record_time = false;  // wall-clock seconds in rows; off keeps outputs reproducible

  // Optional progress hooks. They may be called from several worker threads at
  // once; `row` identifies the job (accuracy and loss are filled in on_row only).
  std::function<void(const SweepRow& row, int iteration, double loss, double seconds)> on_iteration;
  std::function<void(const SweepRow& row, double seconds)> on_row;

  void validate() const;
  /// start, start + step, ... up to and including stop (within 1e-9 step),
  /// each rounded to 12 decimals.
  std::vector<double> grid() const;
};

struct SweepRow {
  ModelKind model = ModelKind::counting;
  double l = 0.0;
  double q = 0.0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double loss = 0.0;  // final training loss; NaN marks a failed run
  double seconds = 0.0;

  bool failed() const;
  bool operator==(const SweepRow& other) const;
};

/// One train + evaluate per (fixed value, grid point, model, seed), rows in that
/// nesting order regardless of completion order. A diverged run yields a row
/// with accuracy 0 and NaN loss; the sweep continues. When `checkpoints` is
/// given it receives the trained checkpoint for each row (empty on failure).
std::vector<SweepRow> run_sweep(const SweepSpec& spec,
                                std::vector<std::optional<Checkpoint>>* checkpoints = nullptr);

inline constexpr const char* kCsvHeader = "model,l,q,seed,accuracy,loss,seconds";

/// Comment lines (written with a leading "# ") precede the header.
std::string format_csv(const std::vector<SweepRow>& rows, const std::vector<std::string>& comments = {});
std::vector<SweepRow> parse_csv(std::string_view text);
void write_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path,
               const std::vector<std::string>& comments = {});
std::vector<SweepRow> read_csv(const std::filesystem::path& path);

/// One sampled activation curve.
struct ShapeCurve {
  int function = 1;        // 1..8
  double parameter = 0.0;  // value of the swept dataset parameter, for coloring
  std::vector<std::pair<double, double>> points;
};

/// All eight functions of a bank sampled at x = 0, 1/(samples-1), ..., 1.
std::vector<ShapeCurve> sample_shapes(const PlinBank& bank, double parameter = 0.0, int samples = 257);

std::string format_shapes_csv(const std::vector<ShapeCurve>& curves);
/// CSV `function,x,fx` with each f_k sampled at x = 0, 1/256, ..., 1.
void dump_shapes(const Checkpoint& ckpt, const std::filesystem::path& path);

struct PlotSeries {
  std::string label;
  std::string color;
  std::string dash;  // SVG stroke-dasharray, empty for solid
  std::vector<std::pair<double, double>> points;
};

struct LinePlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  double x_min = 0.0;
  double x_max = 1.0;
  double y_min = 0.0;
  double y_max = 1.0;
  bool legend = true;
  std::vector<PlotSeries> series;
};

inline constexpr double kPlotWidth = 640.0;
inline constexpr double kPlotHeight = 420.0;
inline constexpr double kPlotLeft = 64.0;
inline constexpr double kPlotRight = 24.0;
inline constexpr double kPlotTop = 36.0;
inline constexpr double kPlotBottom = 56.0;

/// Throws std::invalid_argument if there are no series or all are empty.
std::string render_line_plot(const LinePlot& plot);

/// Accuracy against the varied parameter, one line per (model, fixed value),
/// averaged over seeds; failed rows are skipped.
LinePlot accuracy_plot(const std::vector<SweepRow>& rows, SweepAxis vary);
/// Curves of one function, colored from blue (lowest parameter) to red.
LinePlot shape_plot(const std::vector<ShapeCurve>& curves, int function, const std::string& parameter_name);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace dcount
