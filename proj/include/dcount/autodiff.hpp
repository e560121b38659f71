#pragma once

// Minimal scalar reverse-mode differentiation.
//
// A Tape records one forward pass as a flat list of nodes, each with at most
// three parents and the local partial derivative towards each parent. Values
// that do not depend on any recorded variable are carried as constants inside
// the Var itself and never touch the tape.

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace dcount::ad {

class Tape;

class Var {
 public:
  static constexpr std::uint32_t kConstant = std::numeric_limits<std::uint32_t>::max();

  Var() = default;
  Var(double constant) : value_(constant) {}  // NOLINT(google-explicit-constructor)

  double value() const { return value_; }
  bool is_constant() const { return index_ == kConstant; }
  std::uint32_t index() const { return index_; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  Var(double value, std::uint32_t index, Tape* tape) : value_(value), index_(index), tape_(tape) {}

  double value_ = 0.0;
  std::uint32_t index_ = kConstant;
  Tape* tape_ = nullptr;
};

/// Adjoints of every node of a tape after a backward sweep.
class Adjoints {
 public:
  Adjoints() = default;
  explicit Adjoints(std::vector<double> values) : values_(std::move(values)) {}

  double operator[](const Var& v) const { return v.is_constant() ? 0.0 : values_[v.index()]; }
  std::span<const double> raw() const { return values_; }

 private:
  std::vector<double> values_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A differentiable leaf.
  Var variable(double value);

  /// Records a node. Constant parents are dropped; if every parent is constant
  /// the result is a constant and nothing is recorded.
  static Var unary(double value, const Var& a, double da);
  static Var binary(double value, const Var& a, double da, const Var& b, double db);
  static Var ternary(double value, const Var& a, double da, const Var& b, double db, const Var& c, double dc);

  std::size_t size() const { return nodes_.size(); }
  void clear();
  /// Drops every node recorded after the first `size` ones. Vars pointing past
  /// the new end become dangling.
  void truncate(std::size_t size);
  void reserve(std::size_t nodes) { nodes_.reserve(nodes); }

  /// Seeds `output` with 1 and sweeps the tape in reverse recording order.
  Adjoints backward(const Var& output) const;
  /// Same, writing into a caller-owned buffer (resized to size()).
  void backward(const Var& output, std::vector<double>& adjoints) const;
  /// Only a single scalar seed is accepted; anything else throws std::invalid_argument.
  Adjoints backward(std::span<const Var> seed) const;

 private:
  struct Node {
    std::uint32_t parent[3];
    std::uint32_t arity;
    double partial[3];
  };

  Var push(double value, std::uint32_t arity, const std::uint32_t* parents, const double* partials) {
    if (nodes_.size() >= Var::kConstant) throw_overflow();
    Node& node = nodes_.emplace_back();
    node.arity = arity;
    for (std::uint32_t k = 0; k < arity; ++k) {
      node.parent[k] = parents[k];
      node.partial[k] = partials[k];
    }
    return Var(value, static_cast<std::uint32_t>(nodes_.size() - 1), this);
  }
  [[noreturn]] static void throw_overflow();

  std::vector<Node> nodes_;
};

inline Var Tape::unary(double value, const Var& a, double da) {
  if (a.is_constant()) return Var(value);
  const std::uint32_t p[1] = {a.index()};
  const double d[1] = {da};
  return a.tape()->push(value, 1, p, d);
}

inline Var Tape::binary(double value, const Var& a, double da, const Var& b, double db) {
  std::uint32_t p[2] = {};
  double d[2];
  std::uint32_t arity = 0;
  Tape* tape = nullptr;
  if (!a.is_constant()) {
    p[arity] = a.index();
    d[arity++] = da;
    tape = a.tape();
  }
  if (!b.is_constant()) {
    p[arity] = b.index();
    d[arity++] = db;
    tape = b.tape();
  }
  if (arity == 0) return Var(value);
  return tape->push(value, arity, p, d);
}

inline Var Tape::ternary(double value, const Var& a, double da, const Var& b, double db, const Var& c, double dc) {
  std::uint32_t p[3] = {};
  double d[3];
  std::uint32_t arity = 0;
  Tape* tape = nullptr;
  if (!a.is_constant()) {
    p[arity] = a.index();
    d[arity++] = da;
    tape = a.tape();
  }
  if (!b.is_constant()) {
    p[arity] = b.index();
    d[arity++] = db;
    tape = b.tape();
  }
  if (!c.is_constant()) {
    p[arity] = c.index();
    d[arity++] = dc;
    tape = c.tape();
  }
  if (arity == 0) return Var(value);
  return tape->push(value, arity, p, d);
}

inline Var operator+(const Var& a, const Var& b) {
  return Tape::binary(a.value() + b.value(), a, 1.0, b, 1.0);
}
inline Var operator-(const Var& a, const Var& b) {
  return Tape::binary(a.value() - b.value(), a, 1.0, b, -1.0);
}
inline Var operator*(const Var& a, const Var& b) {
  return Tape::binary(a.value() * b.value(), a, b.value(), b, a.value());
}
inline Var operator/(const Var& a, const Var& b) {
  const double inv = 1.0 / b.value();
  const double q = a.value() / b.value();
  return Tape::binary(q, a, inv, b, -q * inv);
}
inline Var operator-(const Var& a) {
  return Tape::unary(-a.value(), a, -1.0);
}

Var& operator+=(Var& a, const Var& b);
Var& operator*=(Var& a, const Var& b);

/// |x| with subgradient 0 at x = 0.
inline Var abs(const Var& x) {
  const double v = x.value();
  return Tape::unary(v < 0.0 ? -v : v, x, v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
}
/// max(0, x) with subgradient 0 at x = 0.
Var relu(const Var& x);
/// Exact forward; the backward partial is 1 / (2 max(sqrt|x|, 1e-8)).
Var sqrt(const Var& x);
Var reciprocal(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);

Var sum(std::span<const Var> xs);
/// Ordered left-to-right product.
Var product(std::span<const Var> xs);

inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.value(); }

inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline double reciprocal(double x) { return 1.0 / x; }

inline constexpr double kSqrtGradientFloor = 1e-8;

struct GradReport {
  std::vector<double> analytic;
  std::vector<double> numeric;
  std::vector<double> relative_error;
  std::vector<bool> non_finite;  // coordinate excluded from max_relative_error
  double max_relative_error = 0.0;
  std::size_t worst_coordinate = 0;

  bool any_non_finite() const;
};

double relative_error(double analytic, double numeric);

using Computation = std::function<Var(Tape&, std::span<const Var>)>;

/// Compares backward() of `f` at `point` against central differences with the
/// given step. Never throws on mismatch; only a non-positive step is rejected.
GradReport check_gradients(const Computation& f, std::span<const double> point, double step);

}  // namespace dcount::ad
