#pragma once

// Synthetic counting task: n square boxes of side l in the unit square, a
// uniformly drawn number of them marked true, and attention weights that mix
// each box's best overlap with a true box and uniform noise controlled by q.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dcount/counter.hpp"
#include "dcount/random.hpp"

namespace dcount {

struct ToyConfig {
  double side = 0.5;   // l, in (0, 1]
  double noise = 0.0;  // q, in [0, 1]
  int n_boxes = 10;
  int max_count = 10;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument if out of range.
  void validate() const;
};

struct ToySample {
  std::vector<Box> boxes;
  std::vector<double> weights;
  std::vector<bool> true_flags;
  int true_count = 0;
  std::vector<double> scores;  // max IoU with any true box
  double side = 0.0;
  double noise = 0.0;

  ComponentInput input() const { return {weights, boxes}; }
};

ToySample generate_sample(const ToyConfig& cfg, SampleStream& stream);

/// Sample i of the batch uses SampleStream(cfg.seed, substream, batch_index, i).
std::vector<ToySample> generate_batch(const ToyConfig& cfg, int count, std::uint32_t batch_index,
                                      Substream substream = Substream::train);

/// One whitespace-separated line per sample, after a `#` header line:
///   <sample> <true_count> <l> <q> followed, for each box, by
///   <x1> <y1> <x2> <y2> <weight> <true 0|1> <score>
/// Reals use 17 significant digits.
void write_samples(std::ostream& out, const std::vector<ToySample>& samples);

}  // namespace dcount
