// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any fails.
//
//   acceptance <path-to-dcount-cli> [--only 1,2,...]
//
// Criterion 5/6 train 56 models at the full protocol and take roughly 40 minutes
// on one core; the grid is written to acceptance_grid.csv / acceptance_grid.svg
// in the working directory, and the PASS/FAIL lines to acceptance_report.txt.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dcount/bench.hpp"
#include "dcount/counter.hpp"
#include "dcount/plin.hpp"
#include "support.hpp"

using namespace dcount;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;
std::ofstream report_file;

void report(const std::string& id, bool pass, const std::string& detail) {
  const std::string line = std::string(pass ? "PASS " : "FAIL ") + id + ": " + detail;
  std::printf("%s\n", line.c_str());
  std::fflush(stdout);
  report_file << line << '\n' << std::flush;
  if (!pass) ++failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void exact_count() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  const PlinBank identity;
  int exact = 0;
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto ex = testing::make_extreme_case(rng, 10);
    const auto trace = forward(std::span<const double>(ex.weights), std::span<const Box>(ex.boxes), identity, true);
    const double err = std::abs(trace.count - ex.distinct_true);
    worst = std::max(worst, err);
    exact += err <= 1e-6;
  }
  const double s = seconds_since(t0);
  report("1 exact-count", exact == 1000 && s < 5.0,
         fmt("%d/1000 within 1e-6 (max error %.2e), %.2f s (limit 5 s)", exact, worst, s));
}

void gradients() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  double worst = 0.0;
  int non_finite = 0;
  for (int t = 0; t < 50; ++t) {
    // Kinks at least 1e-4 away; a 1e-5 step keeps roundoff (~eps/h) well below
    // the tolerance except for gradients near the 1e-8 floor.
    const auto p = testing::make_smooth_point(rng, 10, 1e-4);
    const int d = p.bank.segments();
    const ad::Computation f = [&](ad::Tape&, std::span<const ad::Var> v) {
      const auto a = v.first(p.boxes.size());
      const TapedPlinBank bank(v.subspan(p.boxes.size()), d);
      const auto trace = forward(a, std::span<const Box>(p.boxes), bank, true);
      ad::Var out = trace.count;
      for (std::size_t i = 0; i < p.projection.size(); ++i) out = out + p.projection[i] * trace.scaled_output[i];
      return out;
    };
    std::vector<double> point = p.weights;
    const auto flat = p.bank.flat_weights();
    point.insert(point.end(), flat.begin(), flat.end());
    const auto r = ad::check_gradients(f, point, 1e-5);
    worst = std::max(worst, r.max_relative_error);
    non_finite += r.any_non_finite();
  }
  const double s = seconds_since(t0);
  report("2 gradients", worst < 1e-4 && non_finite == 0 && s < 60.0,
         fmt("50 points x 138 inputs, max relative error %.2e (limit 1e-4), %d non-finite, %.2f s (limit 60 s)", worst,
             non_finite, s));
}

void plin_properties() {
  std::mt19937_64 rng(303);
  std::normal_distribution<double> w(0.0, 2.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int endpoint = 0, monotone = 0, identity = 0, absolute = 0;
  for (int t = 0; t < 10000; ++t) {
    std::vector<double> weights(16);
    for (double& v : weights) v = w(rng);
    const PlinFunction f(weights);
    endpoint += std::abs(f(0.0)) >= 1e-12 || std::abs(f(1.0) - 1.0) >= 1e-12;
    double x1 = u(rng), x2 = u(rng);
    if (x1 > x2) std::swap(x1, x2);
    monotone += f(x1) > f(x2);

    std::vector<double> abs_weights(weights.size());
    std::transform(weights.begin(), weights.end(), abs_weights.begin(), [](double v) { return std::abs(v); });
    const double x = u(rng);
    absolute += f(x) != PlinFunction(abs_weights)(x);
  }
  const PlinFunction init;
  for (int k = 0; k <= 10000; ++k) identity += std::abs(init(k / 10000.0) - k / 10000.0) > 1e-12;
  report("3 plin-properties", endpoint + monotone + identity + absolute == 0,
         fmt("violations: endpoints %d/10000, monotonicity %d/10000, identity %d/10001, |w|-equivalence %d/10000",
             endpoint, monotone, identity, absolute));
}

void summation_identity() {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 10000; ++t) {
    std::vector<double> a(static_cast<std::size_t>(1 + t % 30));
    for (double& v : a) v = u(rng);
    const auto A = attention_matrix<double>(a);
    const double total = std::accumulate(A.data().begin(), A.data().end(), 0.0);
    worst = std::max(worst, std::abs(std::sqrt(total) - std::accumulate(a.begin(), a.end(), 0.0)));
  }
  report("4 summation-identity", worst <= 1e-10, fmt("10000 vectors, max |sqrt(sum A) - sum a| = %.2e", worst));
}

double accuracy_of(const std::vector<SweepRow>& rows, ModelKind m, double l, double q) {
  for (const auto& r : rows)
    if (r.model == m && r.l == l && r.q == q) return r.accuracy;
  return std::nan("");
}

void toy_task() {
  const auto t0 = Clock::now();
  SweepSpec spec;
  spec.vary = SweepAxis::side;
  spec.fixed = {0.0, 0.25, 0.5};
  spec.models = {ModelKind::baseline_sum, ModelKind::counting};
  spec.on_row = [](const SweepRow& r, double s) {
    std::fprintf(stderr, "  %s l=%.1f q=%.2f accuracy %.4f (%.0f s)\n", std::string(to_string(r.model)).c_str(), r.l, r.q, r.accuracy, s);
  };
  auto rows = run_sweep(spec);
  const double grid_seconds = seconds_since(t0);

  SweepSpec nms = spec;
  nms.fixed = {0.0};
  nms.models = {ModelKind::nms};
  const auto nms_rows = run_sweep(nms);
  rows.insert(rows.end(), nms_rows.begin(), nms_rows.end());
  write_csv(rows, "acceptance_grid.csv", {"acceptance grid: 1000 iterations, batch 1024, lr 0.01, seed 1"});
  write_text_file("acceptance_grid.svg", render_line_plot(accuracy_plot(rows, SweepAxis::side)));

  int failed = 0;
  for (const auto& r : rows) failed += r.failed();

  const auto grid = spec.grid();
  int cells = 0, wins = 0;
  std::string losses;
  for (double q : spec.fixed)
    for (double l : grid) {
      ++cells;
      const double c = accuracy_of(rows, ModelKind::counting, l, q), b = accuracy_of(rows, ModelKind::baseline_sum, l, q);
      if (c >= b) {
        ++wins;
      } else {
        losses += fmt(" (l=%.1f q=%.2f: %.4f < %.4f)", l, q, c, b);
      }
    }
  report("5a counting>=baseline", failed == 0 && wins >= 0.8 * cells,
         fmt("%d/%d cells (need >= 80%%)", wins, cells) + (losses.empty() ? "" : ";" + losses));

  double gap = 0.0;
  for (double l : {0.5, 0.6, 0.7, 0.8})
    gap += (accuracy_of(rows, ModelKind::counting, l, 0.0) - accuracy_of(rows, ModelKind::baseline_sum, l, 0.0)) / 4;
  report("5b large-l gap", gap >= 0.10, fmt("mean counting - baseline at q=0, l=0.5..0.8: %.4f (need >= 0.10)", gap));

  const double c01 = accuracy_of(rows, ModelKind::counting, 0.1, 0.0);
  const double b01 = accuracy_of(rows, ModelKind::baseline_sum, 0.1, 0.0);
  report("5c small-l", c01 >= 0.95 && b01 >= 0.95,
         fmt("l=0.1 q=0: counting %.4f, baseline %.4f (need both >= 0.95)", c01, b01));
  report("5d runtime", grid_seconds < 45 * 60,
         fmt("48 training runs in %.1f min (target < 45 min)", grid_seconds / 60));

  int nms_ok = 0, nms_cells = 0;
  std::string worse;
  for (double l : grid) {
    if (l < 0.4) continue;
    ++nms_cells;
    const double n = accuracy_of(rows, ModelKind::nms, l, 0.0), c = accuracy_of(rows, ModelKind::counting, l, 0.0);
    if (n <= c) {
      ++nms_ok;
    } else {
      worse += fmt(" (l=%.1f: %.4f > %.4f)", l, n, c);
    }
  }
  report("6 nms<=counting", nms_ok == nms_cells,
         fmt("%d/%d cells at q=0, l>=0.4", nms_ok, nms_cells) + (worse.empty() ? "" : ";" + worse));
}

void complexity() {
  std::mt19937_64 rng(707);
  const PlinBank bank = testing::random_bank(rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> xs, ys;
  std::string detail;
  volatile double sink = 0.0;
  for (int n : {10, 20, 40, 80}) {
    ComponentInput in;
    for (int i = 0; i < n; ++i) {
      in.weights.push_back(u(rng));
      in.boxes.push_back(testing::random_square(rng, 0.05, 0.5));
    }
    // Calibrate to ~0.1 s per trial, then keep the fastest of 5 trials.
    int reps = 1;
    for (;;) {
      const auto t0 = Clock::now();
      for (int r = 0; r < reps; ++r) sink = sink + forward(in, bank, true).count;
      if (seconds_since(t0) > 0.1) break;
      reps *= 2;
    }
    double best = 1e300;
    for (int trial = 0; trial < 5; ++trial) {
      const auto t0 = Clock::now();
      for (int r = 0; r < reps; ++r) sink = sink + forward(in, bank, true).count;
      best = std::min(best, seconds_since(t0) / reps);
    }
    if (!ys.empty()) detail += fmt(" (local slope %.2f)", (std::log(best) - ys.back()) / (std::log(n) - xs.back()));
    xs.push_back(std::log(n));
    ys.push_back(std::log(best));
    detail += fmt(" n=%d %.3g s", n, best);
  }
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  const double slope = sxy / sxx;
  report("7 cubic-scaling", std::abs(slope - 3.0) <= 0.4,
         fmt("log-log slope %.2f (need 3.0 +/- 0.4);", slope) + detail);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void determinism(const std::string& cli) {
  const fs::path work = fs::current_path() / "acceptance_determinism";
  std::map<std::string, std::string> outputs[2];
  bool ran = true;
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = work / (run ? "b" : "a");
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string cmd = "\"" + cli + "\" sweep --models baseline,nms,counting --vary q --fixed 0.3,0.6 " +
                            "--range 0:0.5:0.25 --iters 20 --batch 64 --eval-size 512 --quiet " + "--out \"" +
                            (dir / "sweep.csv").string() + "\" --svg \"" + (dir / "sweep.svg").string() +
                            "\" --shapes-svg \"" + dir.string() + "\"";
    ran = ran && std::system(cmd.c_str()) == 0;
    for (const auto& entry : fs::directory_iterator(dir)) outputs[run][entry.path().filename().string()] = slurp(entry.path());
  }
  std::size_t svgs = 0;
  for (const auto& [name, _] : outputs[0]) svgs += name.ends_with(".svg");
  const bool same = outputs[0] == outputs[1];
  report("8 determinism", ran && same && outputs[0].count("sweep.csv") && svgs > 1,
         fmt("two identical sweep invocations: %zu files (%zu SVG), %s", outputs[0].size(), svgs,
             ran ? (same ? "byte-identical" : "outputs differ") : "sweep exited nonzero"));
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <dcount-cli> [--only 1,2,...]\n", argv[0]);
    return 2;
  }
  const std::string cli = argv[1];
  std::set<int> only;
  if (argc >= 4 && std::string(argv[2]) == "--only") {
    std::stringstream ss(argv[3]);
    std::string tok;
    while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
  }
  const auto want = [&](int k) { return only.empty() || only.count(k); };
  report_file.open("acceptance_report.txt");

  try {
    if (want(1)) exact_count();
    if (want(2)) gradients();
    if (want(3)) plin_properties();
    if (want(4)) summation_identity();
    if (want(7)) complexity();
    if (want(8)) determinism(cli);
    if (want(5) || want(6)) toy_task();
  } catch (const std::exception& e) {
    std::printf("FAIL: aborted: %s\n", e.what());
    return 1;
  }
  const std::string summary = fmt("%s: %d criterion line(s) failed", failures ? "FAIL" : "PASS", failures);
  std::printf("%s\n", summary.c_str());
  report_file << summary << '\n';
  return failures ? 1 : 0;
}
