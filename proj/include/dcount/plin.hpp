#pragma once

// Learnable monotone piecewise-linear activations on [0, 1].
//
// A function with d segments has weights w_1..w_d. Segment i covers
// [(i-1)/d, i/d) and has slope proportional to |w_i|; the knot values are the
// normalized cumulative sums sum_{j<=i} |w_j| / sum_m |w_m|, so f(0) = 0,
// f(1) = 1 and f is non-decreasing for any real weights.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "dcount/autodiff.hpp"
#include "dcount/matrix.hpp"

namespace dcount {

inline constexpr int kDefaultSegments = 16;
inline constexpr std::size_t kBankSize = 8;

/// The eight activation slots of the counting component.
enum class Role : std::size_t {
  attention = 0,         // f1: attention matrix and self-loops
  distance = 1,          // f2: box distances for intra-object masking
  similarity = 2,        // f3: row similarity
  x_attention = 3,       // f4
  x_distance = 4,        // f5
  confidence_attention = 5,  // f6
  confidence_distance = 6,   // f7
  output_scale = 7,      // f8
};

inline constexpr std::size_t index_of(Role r) { return static_cast<std::size_t>(r); }

/// Where x falls: knot index i in [0, d-1] and the fraction t in [0, 1]
/// towards knot i+1. Callers clamp x to [0, 1] first.
struct Segment {
  int index;
  double t;
};
inline Segment locate_segment(double x, int segments) {
  const double scaled = x * segments;
  int index = static_cast<int>(scaled);  // x >= 0, so truncation is floor
  if (index >= segments) index = segments - 1;
  return {index, scaled - index};
}

double clamp_unit_slow(double x);

/// Clamps to [0, 1]. Excursions beyond floating-point noise are counted and
/// the first one is reported on stderr.
inline double clamp_unit(double x) {
  return (x >= 0.0 && x <= 1.0) ? x : clamp_unit_slow(x);
}
std::size_t clamp_warning_count();

class PlinFunction {
 public:
  /// All weights 1: the identity on [0, 1].
  explicit PlinFunction(int segments = kDefaultSegments);
  explicit PlinFunction(std::vector<double> weights);

  int segments() const { return static_cast<int>(weights_.size()); }
  std::span<const double> weights() const { return weights_; }
  void set_weights(std::span<const double> weights);

  /// Cached knot values, size d + 1, knots()[0] == 0 and knots()[d] == 1.
  /// Empty if every weight is zero.
  std::span<const double> knots() const { return knots_; }
  bool degenerate() const { return knots_.empty(); }

  /// Throws std::domain_error if every weight is zero.
  double operator()(double x) const {
    if (knots_.empty()) throw_degenerate();
    const Segment seg = locate_segment(clamp_unit(x), segments());
    const auto i = static_cast<std::size_t>(seg.index);
    return (1.0 - seg.t) * knots_[i] + seg.t * knots_[i + 1];
  }

 private:
  void refresh();
  [[noreturn]] static void throw_degenerate();

  std::vector<double> weights_;
  std::vector<double> knots_;
};

double plin_eval(const PlinFunction& f, double x);
Matrix<double> plin_eval_matrix(const PlinFunction& f, const Matrix<double>& m);

struct PlinGradient {
  double dx = 0.0;
  std::vector<double> dw;
};
/// df/dx and df/dw, propagated through |w| and the normalizing sum.
PlinGradient plin_gradients(const PlinFunction& f, double x);

class PlinBank {
 public:
  using scalar_type = double;

  explicit PlinBank(int segments = kDefaultSegments);

  int segments() const { return segments_; }
  std::size_t parameter_count() const { return kBankSize * static_cast<std::size_t>(segments_); }

  PlinFunction& operator[](Role r) { return functions_[index_of(r)]; }
  const PlinFunction& operator[](Role r) const { return functions_[index_of(r)]; }
  PlinFunction& at(std::size_t k) { return functions_.at(k); }
  const PlinFunction& at(std::size_t k) const { return functions_.at(k); }

  double eval(Role r, double x) const { return functions_[index_of(r)](x); }

  /// Flat role-major copy of all weights (function k occupies [k*d, (k+1)*d)).
  std::vector<double> flat_weights() const;
  void set_flat_weights(std::span<const double> weights);

 private:
  int segments_;
  std::array<PlinFunction, kBankSize> functions_;
};

/// A PlinBank recorded on a tape. With `differentiable` set, the weights are
/// tape variables and gradients flow into them; otherwise they are constants.
class TapedPlinBank {
 public:
  using scalar_type = ad::Var;

  TapedPlinBank(ad::Tape& tape, const PlinBank& bank, bool differentiable = true);
  /// From caller-owned weights, role-major (kBankSize * segments entries).
  TapedPlinBank(std::span<const ad::Var> weights, int segments);

  int segments() const { return segments_; }
  ad::Var eval(Role r, const ad::Var& x) const {
    const double raw = x.value();
    const double clamped = clamp_unit(raw);
    const Segment seg = locate_segment(clamped, segments_);
    const std::size_t base = index_of(r) * static_cast<std::size_t>(segments_ + 1) + static_cast<std::size_t>(seg.index);
    const ad::Var& lo = knots_[base];
    const ad::Var& hi = knots_[base + 1];
    const double value = (1.0 - seg.t) * lo.value() + seg.t * hi.value();
    // Slope w.r.t. x is zero where the input was clamped.
    const double slope = clamped == raw ? segments_ * (hi.value() - lo.value()) : 0.0;
    return ad::Tape::ternary(value, x, slope, lo, 1.0 - seg.t, hi, seg.t);
  }

  std::span<const ad::Var> weights(Role r) const {
    const auto d = static_cast<std::size_t>(segments_);
    return std::span<const ad::Var>(weights_).subspan(index_of(r) * d, d);
  }
  std::span<const ad::Var> all_weights() const { return weights_; }

 private:
  void build_knots();

  int segments_;
  std::vector<ad::Var> weights_;
  std::vector<ad::Var> knots_;  // kBankSize blocks of d + 1
};

}  // namespace dcount
