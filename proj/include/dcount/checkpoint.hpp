#pragma once

// Checkpoint text format, one `key value...` entry per line, '#' comments:
//
//   format 1
//   model counting            (baseline_sum | nms | counting)
//   n_boxes 10
//   classes 11
//   segments 16
//   use_confidence 1
//   config_hash 9f3a...       (16 hex digits)
//   f1 <segments reals>       ... through f8
//   head.weight.<c> <n_boxes + 1 reals>   one line per class c
//   head.bias <classes reals>
//
// Reals are C99 hex floats ("%a"), so write -> read -> write is byte-identical.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dcount/plin.hpp"

namespace dcount {

enum class ModelKind { baseline_sum, nms, counting };

std::string_view to_string(ModelKind kind);
/// Accepts the canonical names plus "baseline" and "sum".
ModelKind parse_model_kind(std::string_view name);

/// Linear projection from the (n+1)-dim count feature to class logits.
struct ClassifierHead {
  int classes = 0;
  int features = 0;
  std::vector<double> weights;  // classes x features, row-major
  std::vector<double> bias;     // classes

  static ClassifierHead zeros(int classes, int features);
  std::vector<double> logits(std::span<const double> feature) const;
};

struct Checkpoint {
  ModelKind model = ModelKind::counting;
  int n_boxes = 10;
  bool use_confidence = true;
  std::uint64_t config_hash = 0;
  PlinBank bank;
  ClassifierHead head;
};

std::string format_checkpoint(const Checkpoint& ckpt);
/// Throws std::runtime_error naming the offending line on malformed input.
Checkpoint parse_checkpoint(std::string_view text);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace dcount
