#include "dcount/toygen.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace dcount {

void ToyConfig::validate() const {
  if (!(side > 0.0 && side <= 1.0)) throw std::invalid_argument("side length l must lie in (0, 1]");
  if (!(noise >= 0.0 && noise <= 1.0)) throw std::invalid_argument("noise q must lie in [0, 1]");
  if (n_boxes <= 0) throw std::invalid_argument("n_boxes must be positive");
  if (max_count < 0 || max_count > n_boxes) throw std::invalid_argument("max_count must lie in [0, n_boxes]");
}

ToySample generate_sample(const ToyConfig& cfg, SampleStream& stream) {
  const auto n = static_cast<std::size_t>(cfg.n_boxes);
  ToySample s;
  s.side = cfg.side;
  s.noise = cfg.noise;
  s.true_count = static_cast<int>(stream.below(static_cast<std::uint32_t>(cfg.max_count + 1)));

  s.boxes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = stream.uniform(0.0, 1.0 - cfg.side);
    const double y = stream.uniform(0.0, 1.0 - cfg.side);
    s.boxes.push_back({x, y, x + cfg.side, y + cfg.side});
  }

  // Partial Fisher-Yates: the first true_count entries become the true boxes.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  s.true_flags.assign(n, false);
  for (std::size_t k = 0; k < static_cast<std::size_t>(s.true_count); ++k) {
    const std::size_t pick = k + stream.below(static_cast<std::uint32_t>(n - k));
    std::swap(order[k], order[pick]);
    s.true_flags[order[k]] = true;
  }

  s.scores.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (s.true_flags[j]) s.scores[i] = std::max(s.scores[i], iou(s.boxes[i], s.boxes[j]));
    }
  }

  s.weights.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = stream.uniform();
    const double w = (1.0 - cfg.noise) * s.scores[i] + cfg.noise * z;
    s.weights.push_back(std::clamp(w, 0.0, 1.0));
  }
  return s;
}

std::vector<ToySample> generate_batch(const ToyConfig& cfg, int count, std::uint32_t batch_index, Substream substream) {
  cfg.validate();
  if (count <= 0) throw std::invalid_argument("batch size must be positive");
  std::vector<ToySample> batch;
  batch.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    SampleStream stream(cfg.seed, substream, batch_index, static_cast<std::uint32_t>(i));
    batch.push_back(generate_sample(cfg, stream));
  }
  return batch;
}

void write_samples(std::ostream& out, const std::vector<ToySample>& samples) {
  out << "# sample true_count l q {x1 y1 x2 y2 weight true score}*n\n";
  char buf[32];
  const auto real = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << ' ' << buf;
  };
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const ToySample& s = samples[k];
    out << k << ' ' << s.true_count;
    real(s.side);
    real(s.noise);
    for (std::size_t i = 0; i < s.boxes.size(); ++i) {
      real(s.boxes[i].x1);
      real(s.boxes[i].y1);
      real(s.boxes[i].x2);
      real(s.boxes[i].y2);
      real(s.weights[i]);
      out << ' ' << (s.true_flags[i] ? 1 : 0);
      real(s.scores[i]);
    }
    out << '\n';
  }
}

}  // namespace dcount
