#include "dcount/counter.hpp"

#include <algorithm>
#include <string>

namespace dcount {

bool Box::valid() const {
  const auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  return in_unit(x1) && in_unit(y1) && in_unit(x2) && in_unit(y2) && x1 <= x2 && y1 <= y2;
}

double iou(const Box& a, const Box& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  const double inter = (w > 0.0 && h > 0.0) ? w * h : 0.0;
  const double uni = a.area() + b.area() - inter;
  if (!(uni > 0.0)) return 0.0;
  return inter / uni;
}

Matrix<double> distance_matrix(std::span<const Box> boxes) {
  const std::size_t n = boxes.size();
  auto D = Matrix<double>::square(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = 1.0 - iou(boxes[i], boxes[j]);
      D(i, j) = d;
      D(j, i) = d;
    }
  }
  return D;
}

void ComponentInput::validate() const {
  if (weights.empty()) throw std::invalid_argument("component input is empty");
  if (weights.size() != boxes.size()) {
    throw std::invalid_argument("component input has " + std::to_string(weights.size()) + " weights but " +
                                std::to_string(boxes.size()) + " boxes");
  }
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0 && weights[i] <= 1.0)) {
      throw std::invalid_argument("attention weight " + std::to_string(i) + " outside [0, 1]");
    }
    if (!boxes[i].valid()) throw std::invalid_argument("box " + std::to_string(i) + " is malformed");
  }
}

ComponentTrace<double> forward(const ComponentInput& input, const PlinBank& bank, bool use_confidence) {
  input.validate();
  return forward(std::span<const double>(input.weights), std::span<const Box>(input.boxes), bank, use_confidence);
}

}  // namespace dcount
