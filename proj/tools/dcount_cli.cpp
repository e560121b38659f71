// dcount: toy-task sweeps, training, evaluation and activation-shape dumps.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "dcount/bench.hpp"
#include "dcount/random.hpp"
#include "dcount/toygen.hpp"
#include "dcount/trainers.hpp"

namespace fs = std::filesystem;
using namespace dcount;

namespace {

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Options shared by the training verbs.
struct TrainOptions {
  int iters = 1000;
  int batch = 1024;
  double lr = 0.01;
  std::string confidence = "on";
  int threads = 1;
  std::string log;

  void add(CLI::App& app) {
    app.add_option("--iters", iters, "Training iterations")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--batch", batch, "Batch size")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--lr", lr, "Adam learning rate")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--confidence", confidence, "Feed the confidence-scaled output to the classifier")
        ->capture_default_str()
        ->check(CLI::IsMember({"on", "off"}));
    app.add_option("--threads", threads, "Worker threads per training run")->capture_default_str()->check(
        CLI::PositiveNumber);
    app.add_option("--log", log, "Append training progress (iteration, loss, seconds) to this file");
  }

  TrainConfig config() const {
    TrainConfig cfg;
    cfg.iterations = iters;
    cfg.batch_size = batch;
    cfg.learning_rate = lr;
    cfg.use_confidence = confidence == "on";
    cfg.threads = threads;
    return cfg;
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F&& f, const char* sep = ";") {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? sep : "") + f(xs[i]);
  return out;
}

EvalSplit parse_split(const std::string& s) {
  return s == "training" ? EvalSplit::training : EvalSplit::held_out;
}

void check_parent(const fs::path& path) {
  const fs::path parent = path.parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) throw Failure("directory does not exist: " + parent.string());
}

// Training log: append-only "<job> <iteration> <loss> <seconds>" lines.
class TrainLog {
 public:
  explicit TrainLog(const std::string& path) {
    if (path.empty()) return;
    check_parent(path);
    out_.open(path, std::ios::app);
    if (!out_) throw Failure("cannot open log " + path);
  }
  bool enabled() const { return out_.is_open(); }
  void write(const std::string& job, int it, double loss, double seconds) {
    std::lock_guard<std::mutex> lock(mutex_);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s %d %.10g %.3f\n", job.c_str(), it, loss, seconds);
    out_ << buf;
    out_.flush();
  }

 private:
  std::ofstream out_;
  std::mutex mutex_;
};

std::string job_name(ModelKind m, double l, double q, std::uint64_t seed) {
  return std::string(to_string(m)) + " l=" + fmt(l) + " q=" + fmt(q) + " seed=" + std::to_string(seed);
}

// --- sweep ---------------------------------------------------------------

struct SweepOptions {
  std::string vary = "l";
  std::vector<double> fixed{0.0};
  std::string range = "0.1:0.8:0.1";
  bool fidelity = false;
  std::vector<std::string> models{"baseline_sum", "counting"};
  std::vector<std::uint64_t> seeds{1};
  int eval_size = 8192;
  std::string split = "held-out";
  int jobs = 1;
  bool timing = false;
  bool quiet = false;
  std::string out = "sweep.csv";
  std::string svg;
  std::string shapes_dir;
  TrainOptions train;
};

SweepSpec make_spec(const SweepOptions& o) {
  SweepSpec spec;
  spec.vary = parse_sweep_axis(o.vary);
  spec.fixed = o.fixed;
  const auto parts = [&] {
    std::vector<double> v;
    std::stringstream ss(o.range);
    std::string tok;
    while (std::getline(ss, tok, ':')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw Failure("--range expects start:stop:step, got '" + o.range + "'");
      }
    }
    if (v.size() != 3) throw Failure("--range expects start:stop:step, got '" + o.range + "'");
    return v;
  }();
  spec.start = parts[0];
  spec.stop = parts[1];
  spec.step = o.fidelity ? 0.01 : parts[2];
  spec.models.clear();
  for (const auto& m : o.models) spec.models.push_back(parse_model_kind(m));
  spec.seeds = o.seeds;
  spec.train = o.train.config();
  spec.eval_size = o.eval_size;
  spec.split = parse_split(o.split);
  spec.jobs = o.jobs;
  spec.record_time = o.timing;
  spec.validate();
  return spec;
}

std::vector<std::string> provenance(const SweepSpec& spec) {
  const auto& t = spec.train;
  return {
      "dcount sweep vary=" + std::string(to_string(spec.vary)) +
          " fixed=" + join(spec.fixed, fmt) + " range=" + fmt(spec.start) + ":" + fmt(spec.stop) + ":" +
          fmt(spec.step) + " models=" + join(spec.models, [](ModelKind m) { return std::string(to_string(m)); }) +
          " seeds=" + join(spec.seeds, [](std::uint64_t s) { return std::to_string(s); }),
      "defaults iters=" + std::to_string(t.iterations) + " batch=" + std::to_string(t.batch_size) +
          " lr=" + fmt(t.learning_rate) + " adam_beta1=" + fmt(t.beta1) + " adam_beta2=" + fmt(t.beta2) +
          " adam_eps=" + fmt(t.epsilon) + " segments=" + std::to_string(t.segments) +
          " confidence=" + (t.use_confidence ? "on" : "off") + " nms_iou=" + fmt(t.nms_threshold) +
          " n_boxes=" + std::to_string(spec.n_boxes) + " max_count=" + std::to_string(spec.max_count) +
          " eval_size=" + std::to_string(spec.eval_size) +
          " eval_split=" + (spec.split == EvalSplit::held_out ? "held-out" : "training") +
          " rng=" + kRandomAlgorithm + " seconds=" + (spec.record_time ? "wall-clock" : "not-recorded"),
  };
}

int run_sweep_verb(const SweepOptions& o) {
  SweepSpec spec = make_spec(o);
  check_parent(o.out);
  if (!o.svg.empty()) check_parent(o.svg);
  if (!o.shapes_dir.empty() && !fs::is_directory(o.shapes_dir))
    throw Failure("directory does not exist: " + o.shapes_dir);

  TrainLog log(o.train.log);
  if (log.enabled()) {
    spec.on_iteration = [&](const SweepRow& r, int it, double loss, double seconds) {
      log.write(job_name(r.model, r.l, r.q, r.seed), it, loss, seconds);
    };
  }
  std::mutex progress_mutex;
  if (!o.quiet) {
    spec.on_row = [&](const SweepRow& r, double seconds) {
      std::lock_guard<std::mutex> lock(progress_mutex);
      std::fprintf(stderr, "%s: accuracy %.4f loss %.4f (%.1f s)\n", job_name(r.model, r.l, r.q, r.seed).c_str(),
                   r.accuracy, r.loss, seconds);
    };
  }

  std::vector<std::optional<Checkpoint>> checkpoints;
  const auto rows = run_sweep(spec, &checkpoints);
  write_csv(rows, o.out, provenance(spec));

  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.failed();
  if (!o.svg.empty() && failed < rows.size()) write_text_file(o.svg, render_line_plot(accuracy_plot(rows, spec.vary)));

  if (!o.shapes_dir.empty()) {
    // One CSV and one plot per function and fixed value, curves colored by the varied parameter.
    const std::string fixed_name = spec.vary == SweepAxis::side ? "q" : "l";
    const std::string varied_name(to_string(spec.vary));
    for (double f : spec.fixed) {
      std::vector<ShapeCurve> curves;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const double fixed_value = spec.vary == SweepAxis::side ? r.q : r.l;
        if (r.model != ModelKind::counting || !checkpoints[i] || fixed_value != f || r.seed != spec.seeds.front())
          continue;
        auto c = sample_shapes(checkpoints[i]->bank, spec.vary == SweepAxis::side ? r.l : r.q);
        curves.insert(curves.end(), c.begin(), c.end());
      }
      if (curves.empty()) continue;
      const fs::path base = fs::path(o.shapes_dir) / (fixed_name + "=" + fmt(f));
      write_text_file(base.string() + "_shapes.csv", format_shapes_csv(curves));
      for (int k = 1; k <= static_cast<int>(kBankSize); ++k)
        write_text_file(base.string() + "_f" + std::to_string(k) + ".svg",
                        render_line_plot(shape_plot(curves, k, varied_name)));
    }
  }

  if (failed > 0) throw Failure(std::to_string(failed) + " of " + std::to_string(rows.size()) + " sweep runs failed");
  return 0;
}

// --- train / eval ----------------------------------------------------------

struct TaskOptions {
  double l = 0.5;
  double q = 0.0;
  std::uint64_t seed = 1;

  void add(CLI::App& app) {
    app.add_option("-l,--side", l, "Box side length l")->capture_default_str();
    app.add_option("-q,--noise", q, "Noise level q")->capture_default_str();
    app.add_option("--seed", seed, "Dataset seed")->capture_default_str();
  }
  ToyConfig config() const {
    ToyConfig cfg;
    cfg.side = l;
    cfg.noise = q;
    cfg.seed = seed;
    cfg.validate();
    return cfg;
  }
};

struct TrainVerb {
  std::string model = "counting";
  TaskOptions task;
  TrainOptions train;
  std::string out = "checkpoint.txt";
  int eval_size = 8192;
};

int run_train_verb(const TrainVerb& o) {
  const ModelKind kind = parse_model_kind(o.model);
  const ToyConfig toy = o.task.config();
  TrainConfig cfg = o.train.config();
  cfg.seed = toy.seed;
  check_parent(o.out);
  TrainLog log(o.train.log);
  const std::string job = job_name(kind, toy.side, toy.noise, toy.seed);
  TrainObserver observer;
  if (log.enabled()) observer = [&](int it, double loss, double s) { log.write(job, it, loss, s); };
  const TrainResult r = train(kind, toy, cfg, observer);
  save_checkpoint(r.checkpoint, o.out);
  std::printf("%s final_loss=%.6f", job.c_str(), r.final_loss);
  if (o.eval_size > 0) std::printf(" accuracy=%.6f", evaluate(r.checkpoint, toy, o.eval_size));
  std::printf("\n");
  return 0;
}

struct EvalVerb {
  std::string checkpoint;
  TaskOptions task;
  int eval_size = 8192;
  std::string split = "held-out";
};

int run_eval_verb(const EvalVerb& o) {
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const ToyConfig toy = o.task.config();
  const double acc = evaluate(ck, toy, o.eval_size, parse_split(o.split));
  std::printf("%s accuracy=%.6f\n", job_name(ck.model, toy.side, toy.noise, toy.seed).c_str(), acc);
  return 0;
}

struct ShapesVerb {
  std::string checkpoint;
  std::string out = "shapes.csv";
  std::string svg_prefix;
};

int run_shapes_verb(const ShapesVerb& o) {
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  check_parent(o.out);
  dump_shapes(ck, o.out);
  if (!o.svg_prefix.empty()) {
    check_parent(o.svg_prefix);
    const auto curves = sample_shapes(ck.bank);
    for (int k = 1; k <= static_cast<int>(kBankSize); ++k)
      write_text_file(o.svg_prefix + "f" + std::to_string(k) + ".svg", render_line_plot(shape_plot(curves, k, "")));
  }
  return 0;
}

struct SamplesVerb {
  TaskOptions task;
  int count = 16;
  std::uint32_t batch = 0;
  std::string out;
};

int run_samples_verb(const SamplesVerb& o) {
  const auto samples = generate_batch(o.task.config(), o.count, o.batch, Substream::dump);
  if (o.out.empty() || o.out == "-") {
    write_samples(std::cout, samples);
    return 0;
  }
  check_parent(o.out);
  std::ostringstream text;
  write_samples(text, samples);
  write_text_file(o.out, text.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable counting on the toy task: sweeps, training, evaluation and shape dumps"};
  app.set_config("--config", "", "Read options from a TOML/INI file; command-line flags take precedence");
  app.require_subcommand(1);

  SweepOptions sweep;
  auto* s = app.add_subcommand("sweep", "Train and evaluate models over a grid of l or q values");
  s->add_option("--vary", sweep.vary, "Parameter to sweep")->capture_default_str()->check(CLI::IsMember({"l", "q"}));
  s->add_option("--fixed", sweep.fixed, "Values of the other parameter")->delimiter(',')->capture_default_str();
  s->add_option("--range", sweep.range, "Grid as start:stop:step (inclusive)")->capture_default_str();
  s->add_flag("--fidelity", sweep.fidelity, "Use a 0.01 grid step");
  s->add_option("--models", sweep.models, "Models: baseline_sum, nms, counting")->delimiter(',')->capture_default_str();
  s->add_option("--seeds,--seed", sweep.seeds, "Dataset seeds")->delimiter(',')->capture_default_str();
  s->add_option("--eval-size", sweep.eval_size, "Evaluation samples per run")->capture_default_str()->check(
      CLI::PositiveNumber);
  s->add_option("--split", sweep.split, "Evaluation data")->capture_default_str()->check(
      CLI::IsMember({"held-out", "training"}));
  s->add_option("--jobs", sweep.jobs, "Concurrent training runs")->capture_default_str()->check(CLI::PositiveNumber);
  s->add_flag("--timing", sweep.timing, "Record wall-clock seconds in the CSV (makes it non-reproducible)");
  s->add_flag("--quiet", sweep.quiet, "No per-run progress on stderr");
  s->add_option("--out", sweep.out, "CSV output")->capture_default_str();
  s->add_option("--svg", sweep.svg, "Accuracy plot output");
  s->add_option("--shapes-svg", sweep.shapes_dir, "Directory for activation-shape CSVs and plots");
  sweep.train.add(*s);

  TrainVerb train_opts;
  auto* t = app.add_subcommand("train", "Train one model and save a checkpoint");
  t->add_option("--model", train_opts.model, "baseline_sum, nms or counting")->capture_default_str();
  t->add_option("--out", train_opts.out, "Checkpoint output")->capture_default_str();
  t->add_option("--eval-size", train_opts.eval_size, "Held-out samples to evaluate after training (0: skip)")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  train_opts.task.add(*t);
  train_opts.train.add(*t);

  EvalVerb eval_opts;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on the toy task");
  e->add_option("checkpoint", eval_opts.checkpoint, "Checkpoint file")->required();
  e->add_option("--eval-size", eval_opts.eval_size, "Evaluation samples")->capture_default_str()->check(
      CLI::PositiveNumber);
  e->add_option("--split", eval_opts.split, "Evaluation data")->capture_default_str()->check(
      CLI::IsMember({"held-out", "training"}));
  eval_opts.task.add(*e);

  ShapesVerb shapes;
  auto* d = app.add_subcommand("dump-shapes", "Sample f1..f8 of a checkpoint at x = 0, 1/256, ..., 1");
  d->add_option("checkpoint", shapes.checkpoint, "Checkpoint file")->required();
  d->add_option("--out", shapes.out, "CSV output")->capture_default_str();
  d->add_option("--svg", shapes.svg_prefix, "Write <prefix>f1.svg ... <prefix>f8.svg");

  SamplesVerb samples;
  auto* g = app.add_subcommand("gen-samples", "Write toy-task samples as text");
  g->add_option("--count", samples.count, "Number of samples")->capture_default_str()->check(CLI::PositiveNumber);
  g->add_option("--batch", samples.batch, "Batch index")->capture_default_str();
  g->add_option("--out", samples.out, "Output file (default stdout)");
  samples.task.add(*g);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 2;
  }

  try {
    if (*s) return run_sweep_verb(sweep);
    if (*t) return run_train_verb(train_opts);
    if (*e) return run_eval_verb(eval_opts);
    if (*d) return run_shapes_verb(shapes);
    if (*g) return run_samples_verb(samples);
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  }
  return 1;
}
