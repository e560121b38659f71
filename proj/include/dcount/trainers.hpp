#pragma once

// The three toy-task models and their training loop.
//
//   baseline_sum  expand_count(sum of weights) -> linear head
//   nms           one-hot(#boxes kept by greedy NMS) -> linear head
//   counting      counting component output -> linear head
//
// All three end in a linear projection to classes 0..max_count trained with
// softmax cross-entropy and Adam. Only the counting model has trainable
// activation weights; the other two train the head alone.

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcount/autodiff.hpp"
#include "dcount/checkpoint.hpp"
#include "dcount/counter.hpp"
#include "dcount/toygen.hpp"

namespace dcount {

struct TrainConfig {
  double learning_rate = 0.01;
  int batch_size = 1024;
  int iterations = 1000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 1;  // not consumed: every parameter has a fixed initialization
  bool use_confidence = true;
  double nms_threshold = 0.5;
  int segments = kDefaultSegments;
  int threads = 1;

  void validate() const;
};

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;

  explicit AdamState(std::size_t parameters = 0) : first_moment(parameters, 0.0), second_moment(parameters, 0.0) {}
};

/// One bias-corrected Adam update. Throws std::domain_error naming the index of
/// the first non-finite gradient; parameters and state are left untouched then.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const TrainConfig& cfg);

/// expand_count(sum_i a_i, n).
std::vector<double> baseline_forward(const ToySample& sample);

/// Greedy NMS in descending weight order (ties: lower index first); a box is
/// kept if its IoU with every kept box is <= threshold. No score threshold.
std::size_t nms_keep_count(std::span<const Box> boxes, std::span<const double> weights, double iou_threshold);
/// One-hot (n+1)-vector of nms_keep_count.
std::vector<double> nms_count(const ToySample& sample, double iou_threshold);

/// logits = bias + weights * feature.
template <class T>
std::vector<T> linear_logits(std::span<const T> weights, std::span<const T> bias, std::span<const T> feature) {
  std::vector<T> out(bias.begin(), bias.end());
  for (std::size_t c = 0; c < out.size(); ++c) {
    T acc = out[c];
    for (std::size_t j = 0; j < feature.size(); ++j) acc = acc + weights[c * feature.size() + j] * feature[j];
    out[c] = acc;
  }
  return out;
}

/// Head parameters recorded on a tape.
struct TapedHead {
  std::vector<ad::Var> weights;
  std::vector<ad::Var> bias;

  TapedHead(ad::Tape& tape, const ClassifierHead& head);
  std::vector<ad::Var> logits(std::span<const ad::Var> feature) const {
    return linear_logits<ad::Var>(weights, bias, feature);
  }
};

/// Counting component (o~, or o with confidence off) followed by the head.
template <class Bank, class Head, class T = typename Bank::scalar_type>
std::vector<T> counting_forward(const ToySample& sample, const Bank& bank, const Head& head, bool use_confidence) {
  std::vector<T> a(sample.weights.begin(), sample.weights.end());
  const auto trace = forward(std::span<const T>(a), std::span<const Box>(sample.boxes), bank, use_confidence);
  return head.logits(std::span<const T>(trace.scaled_output));
}

/// -log softmax(logits)[label], shifted by the max logit.
double cross_entropy(std::span<const double> logits, int label);
ad::Var cross_entropy(std::span<const ad::Var> logits, int label);

/// Lowest index wins ties.
std::size_t argmax(std::span<const double> values);

/// Feature vector for the non-learned part of each model (the counting model
/// evaluates the component with the checkpoint's bank).
std::vector<double> model_feature(const Checkpoint& ckpt, const ToySample& sample, double nms_threshold = 0.5);
std::vector<double> model_logits(const Checkpoint& ckpt, const ToySample& sample, double nms_threshold = 0.5);

/// Parameter vector layout used by the trainer: bank weights (role-major),
/// then head weights (row-major), then head bias.
std::vector<double> pack_parameters(const Checkpoint& ckpt);
void unpack_parameters(std::span<const double> params, Checkpoint& ckpt);
std::string parameter_name(const Checkpoint& ckpt, std::size_t index);

/// Mean loss over the batch and its gradient w.r.t. pack_parameters(ckpt).
/// Per-sample gradients are reduced in fixed-size chunks in index order, so the
/// result does not depend on `threads`.
struct BatchGradient {
  double loss = 0.0;
  std::vector<double> gradient;
};
BatchGradient batch_gradient(const Checkpoint& ckpt, const std::vector<ToySample>& batch, double nms_threshold,
                             int threads = 1);

struct TrainingDiverged : std::runtime_error {
  TrainingDiverged(int iteration, const std::string& what)
      : std::runtime_error("training diverged at iteration " + std::to_string(iteration) + ": " + what),
        iteration(iteration) {}
  int iteration;
};

struct TrainResult {
  Checkpoint checkpoint;
  double final_loss = 0.0;
  std::vector<double> losses;  // per iteration
};

/// Called after every iteration with (iteration, mean batch loss, seconds since start).
using TrainObserver = std::function<void(int, double, double)>;

std::uint64_t config_hash(ModelKind kind, const ToyConfig& toy, const TrainConfig& train);

Checkpoint initial_checkpoint(ModelKind kind, const ToyConfig& toy, const TrainConfig& train);

/// Fresh batch per iteration from the training substream (batch index =
/// iteration). Throws TrainingDiverged on a non-finite loss or gradient.
TrainResult train(ModelKind kind, const ToyConfig& toy, const TrainConfig& train_cfg,
                  const TrainObserver& observer = {});

enum class EvalSplit { held_out, training };

/// Exact-match accuracy of argmax(logits) against the true count over
/// `eval_size` samples drawn in batches of 1024 from the chosen substream.
double evaluate(const Checkpoint& ckpt, const ToyConfig& toy, int eval_size = 8192,
                EvalSplit split = EvalSplit::held_out, double nms_threshold = 0.5);

}  // namespace dcount
