#pragma once

// Shared fixtures for the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "dcount/counter.hpp"
#include "dcount/plin.hpp"

namespace dcount::testing {

/// Binary weights over boxes that are pairwise identical or zero-IoU.
struct ExtremeCase {
  std::vector<double> weights;
  std::vector<Box> boxes;
  int distinct_true = 0;  // distinct boxes carrying weight 1
};

/// Objects sit in distinct cells of a 4x4 grid (so they never overlap); each of
/// the n proposals copies one object's box and weight.
inline ExtremeCase make_extreme_case(std::mt19937_64& rng, int n = 10) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<int> cells(16);
  std::iota(cells.begin(), cells.end(), 0);
  std::shuffle(cells.begin(), cells.end(), rng);
  const int objects = std::uniform_int_distribution<int>(1, n)(rng);

  std::vector<Box> object_box;
  std::vector<double> object_weight;
  for (int k = 0; k < objects; ++k) {
    const double cx = (cells[k] % 4) * 0.25;
    const double cy = (cells[k] / 4) * 0.25;
    // Anywhere inside the cell, possibly touching its border.
    double x1 = cx + 0.1 * unit(rng), x2 = cx + 0.25 - 0.1 * unit(rng);
    double y1 = cy + 0.1 * unit(rng), y2 = cy + 0.25 - 0.1 * unit(rng);
    if (unit(rng) < 0.2) {
      x1 = cx;
      x2 = cx + 0.25;
    }
    object_box.push_back({x1, y1, x2, y2});
    object_weight.push_back(unit(rng) < 0.5 ? 1.0 : 0.0);
  }

  ExtremeCase out;
  std::set<int> used_true;
  std::uniform_int_distribution<int> pick(0, objects - 1);
  for (int i = 0; i < n; ++i) {
    const int k = pick(rng);
    out.boxes.push_back(object_box[k]);
    out.weights.push_back(object_weight[k]);
    if (object_weight[k] == 1.0) used_true.insert(k);
  }
  out.distinct_true = static_cast<int>(used_true.size());
  return out;
}

inline Box random_square(std::mt19937_64& rng, double min_side = 0.2, double max_side = 0.6) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double side = min_side + (max_side - min_side) * unit(rng);
  const double x = (1.0 - side) * unit(rng);
  const double y = (1.0 - side) * unit(rng);
  return {x, y, x + side, y + side};
}

inline PlinBank random_bank(std::mt19937_64& rng, double lo = 0.5, double hi = 1.5, int segments = kDefaultSegments) {
  std::uniform_real_distribution<double> w(lo, hi);
  PlinBank bank(segments);
  std::vector<double> flat(bank.parameter_count());
  for (double& v : flat) v = w(rng);
  bank.set_flat_weights(flat);
  return bank;
}

/// Forwards to a PlinBank and records how close any activation input came to a
/// segment boundary (exact 0 and 1 are structural constants and ignored), and
/// how close f6/f7 outputs came to the |. - 0.5| kink.
struct KinkWatch {
  using scalar_type = double;
  const PlinBank& bank;
  mutable double nearest = std::numeric_limits<double>::infinity();

  double eval(Role r, double x) const {
    const double y = bank.eval(r, x);
    if (x != 0.0 && x != 1.0) {
      const double scaled = x * bank.segments();
      nearest = std::min(nearest, std::abs(scaled - std::round(scaled)) / bank.segments());
    }
    if (r == Role::confidence_attention || r == Role::confidence_distance) {
      nearest = std::min(nearest, std::abs(y - 0.5));
    }
    return y;
  }
};

/// A generic point for gradient checks: weights, boxes and bank drawn at random,
/// rejected until every non-smooth operation is at least `margin` from its kink.
struct SmoothPoint {
  std::vector<double> weights;
  std::vector<Box> boxes;
  PlinBank bank;
  std::vector<double> projection;  // fixed random readout of the n+1 outputs
};

inline SmoothPoint make_smooth_point(std::mt19937_64& rng, int n = 10, double margin = 1e-5) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (;;) {
    SmoothPoint p{{}, {}, random_bank(rng), {}};
    for (int i = 0; i < n; ++i) {
      p.weights.push_back(0.05 + 0.9 * unit(rng));
      p.boxes.push_back(random_square(rng));
    }
    for (int i = 0; i <= n; ++i) p.projection.push_back(unit(rng) * 2.0 - 1.0);

    bool ok = true;
    for (int i = 0; i < n && ok; ++i)
      for (int j = i + 1; j < n && ok; ++j) ok = std::abs(p.weights[i] - p.weights[j]) > margin;
    if (!ok) continue;

    const KinkWatch watch{p.bank};
    const auto trace = forward(std::span<const double>(p.weights), std::span<const Box>(p.boxes), watch, true);
    if (watch.nearest < margin) continue;
    // |X_ik - X_jk| inside the similarity product.
    const auto& X = trace.similarity_input;
    for (int i = 0; i < n && ok; ++i)
      for (int j = i + 1; j < n && ok; ++j)
        for (int k = 0; k < n && ok; ++k) ok = std::abs(X(i, k) - X(j, k)) > margin;
    if (!ok) continue;
    if (std::abs(trace.count - std::round(trace.count)) < 100 * margin) continue;
    return p;
  }
}

}  // namespace dcount::testing
