#pragma once

// Counter-based random streams (Philox4x32-10).
//
// Every draw is a pure function of (seed, stream, batch, sample, draw index),
// so sample i of batch j is reproducible regardless of iteration order or
// which thread produced it.

#include <array>
#include <cstdint>

namespace dcount {

inline constexpr const char* kRandomAlgorithm = "philox4x32-10";

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key);

/// Named substreams of one seed.
enum class Substream : std::uint32_t { train = 0, eval = 1, dump = 2, test = 3 };

class SampleStream {
 public:
  SampleStream(std::uint64_t seed, Substream stream, std::uint32_t batch, std::uint32_t sample);

  std::uint32_t next_u32();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on {0, ..., bound - 1}; bound > 0. Unbiased (rejection).
  std::uint32_t below(std::uint32_t bound);

 private:
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
};

}  // namespace dcount
