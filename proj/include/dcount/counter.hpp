#pragma once

// Differentiable counting over scored, possibly overlapping boxes.
//
// Every stage is written once as a template over the scalar type: `double`
// for plain evaluation (with PlinBank) and `ad::Var` for taped evaluation
// (with TapedPlinBank). Boxes are never differentiated, so the distance
// matrix is always plain doubles.

#include <cmath>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dcount/autodiff.hpp"
#include "dcount/matrix.hpp"
#include "dcount/plin.hpp"

namespace dcount {

struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double area() const { return (x2 - x1) * (y2 - y1); }
  bool valid() const;
};

/// Intersection over union; 0 when the union has zero area.
double iou(const Box& a, const Box& b);

struct ComponentInput {
  std::vector<double> weights;
  std::vector<Box> boxes;

  std::size_t size() const { return weights.size(); }
  /// Throws std::invalid_argument on mismatched sizes, n = 0, weights
  /// outside [0, 1] or malformed boxes.
  void validate() const;
};

template <class T>
struct ComponentTrace {
  Matrix<T> attention;           // A
  Matrix<double> distance;       // D
  Matrix<T> deduplicated;        // A~
  Matrix<T> similarity_input;    // X
  Matrix<T> similarity;          // Sim
  std::vector<T> scales;         // s
  Matrix<T> count_matrix;        // C
  T count{};                     // c
  std::vector<T> output;         // o, indices 0..n
  T confidence_attention{};      // p_a
  T confidence_distance{};       // p_D
  T scale{};                     // f8(p_a + p_D), 1 when confidence is off
  std::vector<T> scaled_output;  // o~
};

template <class T>
struct Confidence {
  T attention;
  T distance;
  T scale;
  std::vector<T> scaled_output;
};

namespace detail {
using std::abs;
using std::sqrt;
using ad::abs;
using ad::sqrt;
using ad::relu;
using ad::reciprocal;

template <class T>
T absolute(const T& x) {
  return abs(x);
}
template <class T>
T square_root(const T& x) {
  return sqrt(x);
}
}  // namespace detail

Matrix<double> distance_matrix(std::span<const Box> boxes);

/// A = a a^T.
template <class T>
Matrix<T> attention_matrix(std::span<const T> a) {
  const std::size_t n = a.size();
  auto A = Matrix<T>::square(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) A(i, j) = a[i] * a[j];
  return A;
}

/// A~ = f1(A) . f2(D); the diagonal vanishes because f2(0) = 0.
template <class Bank, class T = typename Bank::scalar_type>
Matrix<T> dedup_intra(const Matrix<T>& A, const Matrix<double>& D, const Bank& bank) {
  const std::size_t n = A.rows();
  auto out = Matrix<T>::square(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out(i, j) = bank.eval(Role::attention, A(i, j)) * bank.eval(Role::distance, T(D(i, j)));
  return out;
}

/// X = f4(A) . f5(D) and Sim_ij = f3(1 - |a_i - a_j|) prod_k f3(1 - |X_ik - X_jk|).
/// The product runs over all n columns in index order. Sim is symmetric, so
/// only i <= j is computed and mirrored.
template <class Bank, class T = typename Bank::scalar_type>
std::pair<Matrix<T>, Matrix<T>> similarity_matrix(std::span<const T> a, const Matrix<T>& A,
                                                  const Matrix<double>& D, const Bank& bank) {
  const std::size_t n = a.size();
  auto X = Matrix<T>::square(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      X(i, j) = bank.eval(Role::x_attention, A(i, j)) * bank.eval(Role::x_distance, T(D(i, j)));

  auto Sim = Matrix<T>::square(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      T sim = bank.eval(Role::similarity, T(1.0) - detail::absolute(a[i] - a[j]));
      for (std::size_t k = 0; k < n; ++k) {
        sim = sim * bank.eval(Role::similarity, T(1.0) - detail::absolute(X(i, k) - X(j, k)));
      }
      Sim(i, j) = sim;
      Sim(j, i) = sim;
    }
  }
  return {std::move(X), std::move(Sim)};
}

/// s_i = 1 / sum_j Sim_ij.
template <class T>
std::vector<T> vertex_scales(const Matrix<T>& Sim) {
  const std::size_t n = Sim.rows();
  std::vector<T> s;
  s.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    T total(0.0);
    for (std::size_t j = 0; j < n; ++j) total = total + Sim(i, j);
    if (!(ad::value_of(total) > 0.0)) throw std::logic_error("vertex_scales: similarity row sums to zero");
    s.push_back(detail::reciprocal(total));
  }
  return s;
}

/// C = A~ . s s^T + diag(s . f1(a . a)). Self-loops scale with s, not s^2.
template <class Bank, class T = typename Bank::scalar_type>
Matrix<T> count_matrix(const Matrix<T>& dedup, std::span<const T> s, std::span<const T> a, const Bank& bank) {
  const std::size_t n = a.size();
  auto C = Matrix<T>::square(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      C(i, j) = dedup(i, j) * (s[i] * s[j]);
    }
    C(i, i) = C(i, i) + s[i] * bank.eval(Role::attention, a[i] * a[i]);
  }
  return C;
}

/// c = sqrt(sum_ij C_ij).
template <class T>
T count_scalar(const Matrix<T>& C) {
  T edges(0.0);
  for (const T& v : C.data()) edges = edges + v;
  return detail::square_root(edges);
}

/// o_i = max(0, 1 - |c - i|) for i = 0..n.
template <class T>
std::vector<T> expand_count(const T& c, std::size_t n) {
  using detail::relu;
  std::vector<T> o;
  o.reserve(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    o.push_back(relu(T(1.0) - detail::absolute(c - T(static_cast<double>(i)))));
  }
  return o;
}

/// p_a = mean |f6(a_i) - 1/2|, p_D = mean |f7(D_ij) - 1/2|, o~ = f8(p_a + p_D) o.
template <class Bank, class T = typename Bank::scalar_type>
Confidence<T> confidence(std::span<const T> a, const Matrix<double>& D, std::span<const T> o, const Bank& bank) {
  const std::size_t n = a.size();
  T pa(0.0);
  for (std::size_t i = 0; i < n; ++i) pa = pa + detail::absolute(bank.eval(Role::confidence_attention, a[i]) - T(0.5));
  pa = pa * T(1.0 / static_cast<double>(n));

  T pd(0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      pd = pd + detail::absolute(bank.eval(Role::confidence_distance, T(D(i, j))) - T(0.5));
  pd = pd * T(1.0 / static_cast<double>(n * n));

  Confidence<T> out{pa, pd, bank.eval(Role::output_scale, pa + pd), {}};
  out.scaled_output.reserve(o.size());
  for (const T& v : o) out.scaled_output.push_back(out.scale * v);
  return out;
}

/// Full component. `a` and `boxes` must already satisfy ComponentInput::validate().
template <class Bank, class T = typename Bank::scalar_type>
ComponentTrace<T> forward(std::span<const T> a, std::span<const Box> boxes, const Bank& bank, bool use_confidence) {
  if (a.size() != boxes.size() || a.empty()) {
    throw std::invalid_argument("forward: need n >= 1 weights and as many boxes");
  }
  const std::size_t n = a.size();
  ComponentTrace<T> trace;
  trace.attention = attention_matrix<T>(a);
  trace.distance = distance_matrix(boxes);
  trace.deduplicated = dedup_intra(trace.attention, trace.distance, bank);
  auto [X, Sim] = similarity_matrix(a, trace.attention, trace.distance, bank);
  trace.similarity_input = std::move(X);
  trace.similarity = std::move(Sim);
  trace.scales = vertex_scales(trace.similarity);
  trace.count_matrix = count_matrix(trace.deduplicated, std::span<const T>(trace.scales), a, bank);
  trace.count = count_scalar(trace.count_matrix);
  trace.output = expand_count(trace.count, n);
  if (use_confidence) {
    Confidence<T> conf = confidence(a, trace.distance, std::span<const T>(trace.output), bank);
    trace.confidence_attention = conf.attention;
    trace.confidence_distance = conf.distance;
    trace.scale = conf.scale;
    trace.scaled_output = std::move(conf.scaled_output);
  } else {
    trace.confidence_attention = T(0.0);
    trace.confidence_distance = T(0.0);
    trace.scale = T(1.0);
    trace.scaled_output = trace.output;
  }
  return trace;
}

ComponentTrace<double> forward(const ComponentInput& input, const PlinBank& bank, bool use_confidence = true);

}  // namespace dcount
