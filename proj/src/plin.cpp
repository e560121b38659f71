#include "dcount/plin.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <stdexcept>
#include <string>

namespace dcount {

namespace {

std::atomic<std::size_t> g_clamp_warnings{0};

// Rounding in callers (1 - |u - v|, logistic outputs, averaged distances) can
// leave inputs a few ulps outside the unit interval; those are clamped silently.
constexpr double kClampSlack = 1e-9;

}  // namespace

double clamp_unit_slow(double x) {
  if (!(x > -kClampSlack && x < 1.0 + kClampSlack)) {
    if (g_clamp_warnings.fetch_add(1) == 0) {
      std::cerr << "warning: piecewise-linear activation input " << x << " outside [0, 1]; clamped\n";
    }
  }
  if (std::isnan(x)) throw std::domain_error("piecewise-linear activation input is NaN");
  return x < 0.0 ? 0.0 : 1.0;
}

std::size_t clamp_warning_count() {
  return g_clamp_warnings.load();
}

PlinFunction::PlinFunction(int segments) {
  if (segments <= 0) throw std::invalid_argument("segment count must be positive");
  weights_.assign(static_cast<std::size_t>(segments), 1.0);
  refresh();
}

PlinFunction::PlinFunction(std::vector<double> weights) : weights_(std::move(weights)) {
  if (weights_.empty()) throw std::invalid_argument("segment count must be positive");
  refresh();
}

void PlinFunction::set_weights(std::span<const double> weights) {
  if (weights.size() != weights_.size()) {
    throw std::invalid_argument("expected " + std::to_string(weights_.size()) + " weights, got " +
                                std::to_string(weights.size()));
  }
  weights_.assign(weights.begin(), weights.end());
  refresh();
}

void PlinFunction::refresh() {
  const std::size_t d = weights_.size();
  std::vector<double> cumulative(d + 1, 0.0);
  for (std::size_t i = 0; i < d; ++i) cumulative[i + 1] = cumulative[i] + std::abs(weights_[i]);
  const double total = cumulative[d];
  if (!(total > 0.0)) {
    knots_.clear();
    return;
  }
  knots_.assign(d + 1, 0.0);
  for (std::size_t i = 1; i <= d; ++i) knots_[i] = cumulative[i] / total;
}

void PlinFunction::throw_degenerate() {
  throw std::domain_error("piecewise-linear function has all-zero weights");
}

double plin_eval(const PlinFunction& f, double x) {
  return f(x);
}

Matrix<double> plin_eval_matrix(const PlinFunction& f, const Matrix<double>& m) {
  Matrix<double> out(m.rows(), m.cols());
  auto src = m.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

PlinGradient plin_gradients(const PlinFunction& f, double x) {
  PlinBank bank(f.segments());
  bank[Role::attention] = f;
  ad::Tape tape;
  const TapedPlinBank taped(tape, bank);
  const ad::Var input = tape.variable(x);
  const ad::Var out = taped.eval(Role::attention, input);
  const ad::Adjoints adj = tape.backward(out);

  PlinGradient grad;
  grad.dx = adj[input];
  for (const ad::Var& w : taped.weights(Role::attention)) grad.dw.push_back(adj[w]);
  return grad;
}

PlinBank::PlinBank(int segments)
    : segments_(segments),
      functions_{PlinFunction(segments), PlinFunction(segments), PlinFunction(segments), PlinFunction(segments),
                 PlinFunction(segments), PlinFunction(segments), PlinFunction(segments), PlinFunction(segments)} {}

std::vector<double> PlinBank::flat_weights() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& f : functions_) flat.insert(flat.end(), f.weights().begin(), f.weights().end());
  return flat;
}

void PlinBank::set_flat_weights(std::span<const double> weights) {
  if (weights.size() != parameter_count()) {
    throw std::invalid_argument("expected " + std::to_string(parameter_count()) + " bank weights, got " +
                                std::to_string(weights.size()));
  }
  const auto d = static_cast<std::size_t>(segments_);
  for (std::size_t k = 0; k < kBankSize; ++k) functions_[k].set_weights(weights.subspan(k * d, d));
}

TapedPlinBank::TapedPlinBank(ad::Tape& tape, const PlinBank& bank, bool differentiable)
    : segments_(bank.segments()) {
  weights_.reserve(bank.parameter_count());
  for (double w : bank.flat_weights()) weights_.push_back(differentiable ? tape.variable(w) : ad::Var(w));
  build_knots();
}

TapedPlinBank::TapedPlinBank(std::span<const ad::Var> weights, int segments)
    : segments_(segments), weights_(weights.begin(), weights.end()) {
  if (segments <= 0 || weights_.size() != kBankSize * static_cast<std::size_t>(segments)) {
    throw std::invalid_argument("taped bank needs 8 x segments weights");
  }
  build_knots();
}

void TapedPlinBank::build_knots() {
  const auto d = static_cast<std::size_t>(segments_);
  knots_.reserve(kBankSize * (d + 1));
  std::vector<ad::Var> cumulative(d + 1, ad::Var(0.0));
  for (std::size_t k = 0; k < kBankSize; ++k) {
    for (std::size_t i = 0; i < d; ++i) cumulative[i + 1] = cumulative[i] + ad::abs(weights_[k * d + i]);
    const ad::Var total = cumulative[d];
    if (!(total.value() > 0.0)) {
      throw std::domain_error("piecewise-linear function f" + std::to_string(k + 1) + " has all-zero weights");
    }
    knots_.emplace_back(0.0);
    for (std::size_t i = 1; i <= d; ++i) knots_.push_back(cumulative[i] / total);
  }
}

}  // namespace dcount
