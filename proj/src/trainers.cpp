#include "dcount/trainers.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <thread>

namespace dcount {

namespace {

// Samples per gradient-reduction chunk. Fixed so that the reduction tree is the
// same for any thread count.
constexpr std::size_t kReductionChunk = 16;
constexpr int kEvalBatch = 1024;

template <class Fn>
void parallel_for(std::size_t jobs, int threads, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || jobs <= 1) {
    for (std::size_t j = 0; j < jobs; ++j) fn(j);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, jobs); ++w) {
    pool.emplace_back([&] {
      for (std::size_t j = next++; j < jobs; j = next++) fn(j);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (batch_size <= 0) throw std::invalid_argument("batch size must be positive");
  if (iterations < 1) throw std::invalid_argument("iterations must be at least 1");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in (0, 1)");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("Adam epsilon must be positive");
  if (!(nms_threshold > 0.0 && nms_threshold < 1.0)) throw std::invalid_argument("NMS threshold must lie in (0, 1)");
  if (segments <= 0) throw std::invalid_argument("segment count must be positive");
  if (threads <= 0) throw std::invalid_argument("thread count must be positive");
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const TrainConfig& cfg) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: parameter, gradient and state sizes differ");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw std::domain_error("non-finite gradient for parameter " + std::to_string(i));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grads[i];
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

std::vector<double> baseline_forward(const ToySample& sample) {
  const double total = std::accumulate(sample.weights.begin(), sample.weights.end(), 0.0);
  return expand_count(total, sample.weights.size());
}

std::size_t nms_keep_count(std::span<const Box> boxes, std::span<const double> weights, double iou_threshold) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    const bool overlaps = std::any_of(kept.begin(), kept.end(),
                                      [&](std::size_t k) { return iou(boxes[i], boxes[k]) > iou_threshold; });
    if (!overlaps) kept.push_back(i);
  }
  return kept.size();
}

std::vector<double> nms_count(const ToySample& sample, double iou_threshold) {
  std::vector<double> feature(sample.boxes.size() + 1, 0.0);
  feature[nms_keep_count(sample.boxes, sample.weights, iou_threshold)] = 1.0;
  return feature;
}

TapedHead::TapedHead(ad::Tape& tape, const ClassifierHead& head) {
  weights.reserve(head.weights.size());
  for (double w : head.weights) weights.push_back(tape.variable(w));
  bias.reserve(head.bias.size());
  for (double b : head.bias) bias.push_back(tape.variable(b));
}

double cross_entropy(std::span<const double> logits, int label) {
  const double shift = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - shift);
  return std::log(total) + shift - logits[static_cast<std::size_t>(label)];
}

ad::Var cross_entropy(std::span<const ad::Var> logits, int label) {
  // The shift is a constant; log-sum-exp is invariant to it, so gradients stay exact.
  double shift = logits.front().value();
  for (const ad::Var& z : logits) shift = std::max(shift, z.value());
  ad::Var total(0.0);
  for (const ad::Var& z : logits) total = total + ad::exp(z - shift);
  return ad::log(total) + ad::Var(shift) - logits[static_cast<std::size_t>(label)];
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::vector<double> model_feature(const Checkpoint& ckpt, const ToySample& sample, double nms_threshold) {
  switch (ckpt.model) {
    case ModelKind::baseline_sum: return baseline_forward(sample);
    case ModelKind::nms: return nms_count(sample, nms_threshold);
    case ModelKind::counting: {
      const auto trace = forward(std::span<const double>(sample.weights), std::span<const Box>(sample.boxes),
                                 ckpt.bank, ckpt.use_confidence);
      return trace.scaled_output;
    }
  }
  throw std::logic_error("unreachable model kind");
}

std::vector<double> model_logits(const Checkpoint& ckpt, const ToySample& sample, double nms_threshold) {
  return ckpt.head.logits(model_feature(ckpt, sample, nms_threshold));
}

std::vector<double> pack_parameters(const Checkpoint& ckpt) {
  std::vector<double> params = ckpt.bank.flat_weights();
  params.insert(params.end(), ckpt.head.weights.begin(), ckpt.head.weights.end());
  params.insert(params.end(), ckpt.head.bias.begin(), ckpt.head.bias.end());
  return params;
}

void unpack_parameters(std::span<const double> params, Checkpoint& ckpt) {
  const std::size_t bank = ckpt.bank.parameter_count();
  const std::size_t weights = ckpt.head.weights.size();
  const std::size_t bias = ckpt.head.bias.size();
  if (params.size() != bank + weights + bias) throw std::invalid_argument("unpack_parameters: size mismatch");
  ckpt.bank.set_flat_weights(params.subspan(0, bank));
  std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(bank), weights, ckpt.head.weights.begin());
  std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(bank + weights), bias, ckpt.head.bias.begin());
}

std::string parameter_name(const Checkpoint& ckpt, std::size_t index) {
  const std::size_t d = static_cast<std::size_t>(ckpt.bank.segments());
  const std::size_t bank = ckpt.bank.parameter_count();
  const std::size_t features = static_cast<std::size_t>(ckpt.head.features);
  if (index < bank) return "f" + std::to_string(index / d + 1) + ".w" + std::to_string(index % d + 1);
  index -= bank;
  if (index < ckpt.head.weights.size()) {
    return "head.weight[" + std::to_string(index / features) + "][" + std::to_string(index % features) + "]";
  }
  index -= ckpt.head.weights.size();
  return "head.bias[" + std::to_string(index) + "]";
}

BatchGradient batch_gradient(const Checkpoint& ckpt, const std::vector<ToySample>& batch, double nms_threshold,
                             int threads) {
  const std::size_t bank_params = ckpt.bank.parameter_count();
  const std::size_t total_params = bank_params + ckpt.head.weights.size() + ckpt.head.bias.size();
  const std::size_t chunks = (batch.size() + kReductionChunk - 1) / kReductionChunk;
  const bool learn_bank = ckpt.model == ModelKind::counting;

  std::vector<std::vector<double>> chunk_grad(chunks, std::vector<double>(total_params, 0.0));
  std::vector<double> chunk_loss(chunks, 0.0);

  // One tape per chunk: parameters are recorded once, then every sample of the
  // chunk, and a single backward sweep from the summed loss.
  parallel_for(chunks, threads, [&](std::size_t chunk) {
    ad::Tape tape;
    const std::size_t begin = chunk * kReductionChunk;
    const std::size_t end = std::min(batch.size(), begin + kReductionChunk);
    tape.reserve((learn_bank ? 6000 : 400) * (end - begin) + 1024);
    const TapedPlinBank bank(tape, ckpt.bank, learn_bank);
    const TapedHead head(tape, ckpt.head);
    ad::Var total(0.0);
    for (std::size_t s = begin; s < end; ++s) {
      const ToySample& sample = batch[s];
      std::vector<ad::Var> logits;
      if (learn_bank) {
        logits = counting_forward(sample, bank, head, ckpt.use_confidence);
      } else {
        const std::vector<double> feature = model_feature(ckpt, sample, nms_threshold);
        const std::vector<ad::Var> constant(feature.begin(), feature.end());
        logits = head.logits(constant);
      }
      total = total + cross_entropy(logits, sample.true_count);
    }
    std::vector<double> adjoints;
    tape.backward(total, adjoints);
    const auto adj = [&](const ad::Var& v) { return v.is_constant() ? 0.0 : adjoints[v.index()]; };

    auto& grad = chunk_grad[chunk];
    std::size_t k = 0;
    if (learn_bank) {
      for (const ad::Var& w : bank.all_weights()) grad[k++] = adj(w);
    }
    k = bank_params;
    for (const ad::Var& w : head.weights) grad[k++] = adj(w);
    for (const ad::Var& b : head.bias) grad[k++] = adj(b);
    chunk_loss[chunk] = total.value();
  });

  BatchGradient out;
  out.gradient.assign(total_params, 0.0);
  for (std::size_t c = 0; c < chunks; ++c) {
    out.loss += chunk_loss[c];
    for (std::size_t i = 0; i < total_params; ++i) out.gradient[i] += chunk_grad[c][i];
  }
  const double scale = 1.0 / static_cast<double>(batch.size());
  out.loss *= scale;
  for (double& g : out.gradient) g *= scale;
  return out;
}

std::uint64_t config_hash(ModelKind kind, const ToyConfig& toy, const TrainConfig& train) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "model=%s;l=%.17g;q=%.17g;n=%d;max=%d;seed=%llu;lr=%.17g;batch=%d;iters=%d;b1=%.17g;b2=%.17g;"
                "eps=%.17g;conf=%d;nms=%.17g;d=%d",
                std::string(to_string(kind)).c_str(), toy.side, toy.noise, toy.n_boxes, toy.max_count,
                static_cast<unsigned long long>(toy.seed), train.learning_rate, train.batch_size, train.iterations,
                train.beta1, train.beta2, train.epsilon, train.use_confidence ? 1 : 0, train.nms_threshold,
                train.segments);
  return fnv1a64(buf);
}

Checkpoint initial_checkpoint(ModelKind kind, const ToyConfig& toy, const TrainConfig& train) {
  Checkpoint ckpt;
  ckpt.model = kind;
  ckpt.n_boxes = toy.n_boxes;
  ckpt.use_confidence = train.use_confidence;
  ckpt.config_hash = config_hash(kind, toy, train);
  ckpt.bank = PlinBank(train.segments);
  ckpt.head = ClassifierHead::zeros(toy.max_count + 1, toy.n_boxes + 1);
  return ckpt;
}

TrainResult train(ModelKind kind, const ToyConfig& toy, const TrainConfig& cfg, const TrainObserver& observer) {
  toy.validate();
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();

  TrainResult result;
  result.checkpoint = initial_checkpoint(kind, toy, cfg);
  std::vector<double> params = pack_parameters(result.checkpoint);
  AdamState state(params.size());
  result.losses.reserve(static_cast<std::size_t>(cfg.iterations));

  for (int it = 0; it < cfg.iterations; ++it) {
    const auto batch = generate_batch(toy, cfg.batch_size, static_cast<std::uint32_t>(it), Substream::train);
    const BatchGradient bg = batch_gradient(result.checkpoint, batch, cfg.nms_threshold, cfg.threads);
    if (!std::isfinite(bg.loss)) throw TrainingDiverged(it, "non-finite loss");
    for (std::size_t i = 0; i < bg.gradient.size(); ++i) {
      if (!std::isfinite(bg.gradient[i])) {
        throw TrainingDiverged(it, "non-finite gradient for " + parameter_name(result.checkpoint, i));
      }
    }
    adam_step(params, bg.gradient, state, cfg);
    unpack_parameters(params, result.checkpoint);
    result.losses.push_back(bg.loss);
    if (observer) {
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
      observer(it, bg.loss, elapsed.count());
    }
  }
  result.final_loss = result.losses.back();
  return result;
}

double evaluate(const Checkpoint& ckpt, const ToyConfig& toy, int eval_size, EvalSplit split, double nms_threshold) {
  toy.validate();
  if (eval_size <= 0) throw std::invalid_argument("eval size must be positive");
  if (ckpt.n_boxes != toy.n_boxes || ckpt.head.classes != toy.max_count + 1) {
    throw std::invalid_argument("checkpoint was trained for " + std::to_string(ckpt.n_boxes) + " boxes and " +
                                std::to_string(ckpt.head.classes) + " classes");
  }
  const Substream stream = split == EvalSplit::held_out ? Substream::eval : Substream::train;
  int correct = 0;
  int seen = 0;
  for (std::uint32_t b = 0; seen < eval_size; ++b) {
    const int count = std::min(kEvalBatch, eval_size - seen);
    for (const ToySample& sample : generate_batch(toy, count, b, stream)) {
      const auto logits = model_logits(ckpt, sample, nms_threshold);
      if (argmax(logits) == static_cast<std::size_t>(sample.true_count)) ++correct;
    }
    seen += count;
  }
  return static_cast<double>(correct) / static_cast<double>(eval_size);
}

}  // namespace dcount
