#include "dcount/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dcount::ad {

Var Tape::variable(double value) {
  return push(value, 0, nullptr, nullptr);
}

void Tape::throw_overflow() {
  throw std::length_error("tape exceeds 2^32 - 1 nodes");
}

void Tape::clear() {
  nodes_.clear();
}

void Tape::truncate(std::size_t size) {
  if (size < nodes_.size()) nodes_.resize(size);
}

void Tape::backward(const Var& output, std::vector<double>& adjoints) const {
  adjoints.assign(nodes_.size(), 0.0);
  if (output.is_constant()) return;
  if (output.tape() != this) {
    throw std::invalid_argument("backward: output was recorded on a different tape");
  }
  adjoints[output.index()] = 1.0;
  for (std::size_t i = output.index() + 1; i-- > 0;) {
    const double g = adjoints[i];
    if (g == 0.0) continue;
    const Node& node = nodes_[i];
    for (std::uint32_t k = 0; k < node.arity; ++k) {
      adjoints[node.parent[k]] += node.partial[k] * g;
    }
  }
}

Adjoints Tape::backward(const Var& output) const {
  std::vector<double> adjoints;
  backward(output, adjoints);
  return Adjoints(std::move(adjoints));
}

Adjoints Tape::backward(std::span<const Var> seed) const {
  if (seed.size() != 1) {
    throw std::invalid_argument("backward: seed must be a single scalar, got " + std::to_string(seed.size()) +
                                " outputs");
  }
  return backward(seed.front());
}

Var& operator+=(Var& a, const Var& b) {
  a = a + b;
  return a;
}

Var& operator*=(Var& a, const Var& b) {
  a = a * b;
  return a;
}

Var relu(const Var& x) {
  const double v = x.value();
  return v > 0.0 ? Tape::unary(v, x, 1.0) : Tape::unary(0.0, x, 0.0);
}

Var sqrt(const Var& x) {
  const double root = std::sqrt(x.value());
  const double floored = std::max(std::sqrt(std::abs(x.value())), kSqrtGradientFloor);
  return Tape::unary(root, x, 0.5 / floored);
}

Var reciprocal(const Var& x) {
  const double inv = 1.0 / x.value();
  return Tape::unary(inv, x, -inv * inv);
}

Var exp(const Var& x) {
  const double e = std::exp(x.value());
  return Tape::unary(e, x, e);
}

Var log(const Var& x) {
  return Tape::unary(std::log(x.value()), x, 1.0 / x.value());
}

Var sum(std::span<const Var> xs) {
  Var total(0.0);
  for (const Var& x : xs) total = total + x;
  return total;
}

Var product(std::span<const Var> xs) {
  Var total(1.0);
  for (const Var& x : xs) total = total * x;
  return total;
}

bool GradReport::any_non_finite() const {
  return std::find(non_finite.begin(), non_finite.end(), true) != non_finite.end();
}

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / scale;
}

namespace {

double evaluate_at(const Computation& f, std::span<const double> point) {
  Tape tape;
  std::vector<Var> inputs(point.begin(), point.end());  // constants: value only
  return f(tape, inputs).value();
}

}  // namespace

GradReport check_gradients(const Computation& f, std::span<const double> point, double step) {
  if (!(step > 0.0)) {
    throw std::invalid_argument("check_gradients: step must be positive");
  }
  const std::size_t dim = point.size();
  GradReport report;
  report.analytic.resize(dim);
  report.numeric.resize(dim);
  report.relative_error.assign(dim, 0.0);
  report.non_finite.assign(dim, false);

  {
    Tape tape;
    std::vector<Var> inputs;
    inputs.reserve(dim);
    for (double x : point) inputs.push_back(tape.variable(x));
    const Var out = f(tape, inputs);
    const Adjoints adj = tape.backward(out);
    for (std::size_t i = 0; i < dim; ++i) report.analytic[i] = adj[inputs[i]];
  }

  std::vector<double> probe(point.begin(), point.end());
  for (std::size_t i = 0; i < dim; ++i) {
    probe[i] = point[i] + step;
    const double up = evaluate_at(f, probe);
    probe[i] = point[i] - step;
    const double down = evaluate_at(f, probe);
    probe[i] = point[i];
    report.numeric[i] = (up - down) / (2.0 * step);

    if (!std::isfinite(up) || !std::isfinite(down) || !std::isfinite(report.analytic[i])) {
      report.non_finite[i] = true;
      continue;
    }
    report.relative_error[i] = relative_error(report.analytic[i], report.numeric[i]);
    if (report.relative_error[i] > report.max_relative_error) {
      report.max_relative_error = report.relative_error[i];
      report.worst_coordinate = i;
    }
  }
  return report;
}

}  // namespace dcount::ad
