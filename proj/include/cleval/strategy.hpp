#pragma once

// Continual-learning strategies. Every strategy is a pure state transformer
// from (previous hypothesis, training batch, external memory, optional task
// label) to (updated hypothesis, updated memory); randomness is derived from
// the config seed and the position of the batch in the stream, never carried
// between calls.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "learner.hpp"
#include "rng.hpp"

namespace cleval {

// Bounded store of raw examples plus auxiliary per-task tensors (anchor
// parameters and Fisher diagonals for the quadratic penalty).
struct FisherAnchor {
  std::vector<float> anchor_params;
  std::vector<float> fisher_diag;
  std::optional<int> task_label;
};

struct ExternalMemory {
  std::vector<LabeledExample> stored_examples;
  std::size_t capacity = 0;  // B; stored_examples never exceeds it
  std::vector<FisherAnchor> anchors;
  long long seen_count = 0;  // examples streamed past the reservoir

  long long raw_bits(int feature_dim) const {
    return static_cast<long long>(stored_examples.size()) * (32LL * feature_dim + 32LL);
  }
  long long aux_bits() const {
    long long bits = 0;
    for (const auto& a : anchors) {
      bits += 32LL * static_cast<long long>(a.anchor_params.size() + a.fisher_diag.size());
    }
    return bits;
  }
};

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  double lr = 0.05;
  double lambda_ewc = 0.0;
  std::size_t buffer_capacity = 200;  // B
  double replay_fraction = 0.5;
  std::uint64_t seed = 0;
  std::vector<int> hidden_sizes = {32};
  int fisher_samples = 128;
  bool allow_memory_relaxation = false;  // required by the cumulative baseline
  bool ewc_per_batch_anchors = false;    // anchor every batch even when labels exist

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (lr <= 0.0) throw std::invalid_argument("config: lr must be positive");
    if (lambda_ewc < 0.0) throw std::invalid_argument("config: lambda_ewc must be >= 0");
    if (replay_fraction < 0.0 || replay_fraction > 1.0) {
      throw std::invalid_argument("config: replay_fraction must be in [0, 1]");
    }
    if (fisher_samples < 1) throw std::invalid_argument("config: fisher_samples must be >= 1");
    for (int hs : hidden_sizes) {
      if (hs < 1) throw std::invalid_argument("config: hidden layer sizes must be >= 1");
    }
  }
};

// Invoked after every completed mini-batch with its 1-based index and the
// current hypothesis. The harness uses it to fill the mini-batch log; the
// strategy never sees test data.
using MiniBatchHook = std::function<void(int, const Hypothesis&)>;

struct StepContext {
  int step_index = 1;  // 1-based position of the batch in the stream
  OpsCounter* ops = nullptr;
  MiniBatchHook on_minibatch;
};

struct StrategyResult {
  Hypothesis h;
  ExternalMemory mem;
};

using StrategyFn =
    std::function<StrategyResult(const Hypothesis&, const Dataset&, ExternalMemory,
                                 std::optional<int>, const TrainConfig&, const StepContext&)>;

// Classic reservoir sampling: the first B examples are stored, after that an
// incoming example replaces a uniform victim with probability B/seen.
inline void reservoir_update(ExternalMemory& mem, const LabeledExample& example, Rng& rng) {
  ++mem.seen_count;
  if (mem.capacity == 0) return;
  if (mem.stored_examples.size() < mem.capacity) {
    mem.stored_examples.push_back(example);
    return;
  }
  const std::size_t slot = rng.index(static_cast<std::size_t>(mem.seen_count));
  if (slot < mem.capacity) mem.stored_examples[slot] = example;
}

// Empirical diagonal Fisher at h: mean over sampled examples of the squared
// per-example log-likelihood gradient.
inline std::vector<float> estimate_fisher_diag(const Hypothesis& h, const Dataset& tr,
                                               int n_samples, std::uint64_t seed,
                                               OpsCounter* ops = nullptr) {
  if (tr.empty()) throw std::invalid_argument("estimate_fisher_diag: empty training set");
  if (n_samples < 1) throw std::invalid_argument("estimate_fisher_diag: n_samples must be >= 1");
  Rng rng(mix_seed(seed, 0xf15e));
  std::vector<double> acc(h.param_count(), 0.0);
  for (int s = 0; s < n_samples; ++s) {
    const auto& ex = tr.examples[rng.index(tr.size())];
    const auto [loss, g] = loss_and_grad(h, std::span<const LabeledExample>(&ex, 1), ops);
    for (std::size_t k = 0; k < acc.size(); ++k) {
      acc[k] += static_cast<double>(g.values[k]) * g.values[k];
    }
  }
  std::vector<float> fisher(acc.size());
  for (std::size_t k = 0; k < acc.size(); ++k) {
    fisher[k] = static_cast<float>(acc[k] / n_samples);
  }
  return fisher;
}

namespace detail {

// RNG stream tags; each phase of a training step draws from its own stream so
// adding or removing one phase never perturbs another.
enum : std::uint64_t { kShuffleStream = 1, kReplayStream = 2, kReservoirStream = 3, kFisherStream = 4 };

using PenaltyFn = std::function<void(GradientVector&, const Hypothesis&)>;

// Shared epoch/mini-batch loop. When replay_mem is non-empty, each mini-batch
// holds ceil(replay_fraction * batch_size) uniform draws from memory and
// fills the rest from the shuffled training set.
inline void sgd_epochs(Hypothesis& h, const Dataset& tr, const TrainConfig& cfg,
                       const StepContext& ctx, const ExternalMemory* replay_mem,
                       const PenaltyFn& add_penalty) {
  Rng shuffle_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(ctx.step_index), kShuffleStream));
  Rng replay_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(ctx.step_index), kReplayStream));

  std::size_t replay_k = 0;
  if (replay_mem && !replay_mem->stored_examples.empty() && cfg.replay_fraction > 0.0) {
    replay_k = static_cast<std::size_t>(
        std::ceil(cfg.replay_fraction * static_cast<double>(cfg.batch_size)));
    replay_k = std::min<std::size_t>(replay_k, static_cast<std::size_t>(cfg.batch_size));
  }
  const std::size_t fresh_per_batch = std::max<std::size_t>(
      1, static_cast<std::size_t>(cfg.batch_size) - replay_k);

  std::vector<std::size_t> order(tr.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  int minibatch_index = 0;
  std::vector<LabeledExample> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += fresh_per_batch) {
      batch.clear();
      const std::size_t stop = std::min(order.size(), start + fresh_per_batch);
      for (std::size_t i = start; i < stop; ++i) batch.push_back(tr.examples[order[i]]);
      for (std::size_t r = 0; r < replay_k; ++r) {
        batch.push_back(replay_mem->stored_examples[replay_rng.index(
            replay_mem->stored_examples.size())]);
      }
      auto [loss, grad] = loss_and_grad(h, batch, ctx.ops);
      if (add_penalty) add_penalty(grad, h);
      sgd_step(h, grad, cfg.lr);
      ++minibatch_index;
      if (ctx.on_minibatch) ctx.on_minibatch(minibatch_index, h);
    }
  }
}

}  // namespace detail

// Plain SGD on the new batch only; the memory passes through untouched.
inline StrategyResult train_naive(const Hypothesis& h_prev, const Dataset& tr,
                                  ExternalMemory mem, std::optional<int> /*task_label*/,
                                  const TrainConfig& cfg, const StepContext& ctx = {}) {
  if (tr.empty()) throw std::invalid_argument("train_naive: empty training set");
  cfg.validate();
  Hypothesis h = h_prev;
  detail::sgd_epochs(h, tr, cfg, ctx, nullptr, nullptr);
  return {std::move(h), std::move(mem)};
}

// Offline reference: accumulate everything seen, reinitialize, retrain on the
// union. Breaks the bounded-memory constraint by design, so it refuses to run
// unless the memory relaxation is switched on.
inline StrategyResult train_cumulative(const Hypothesis& h_prev, const Dataset& tr,
                                       ExternalMemory mem, std::optional<int> /*task_label*/,
                                       const TrainConfig& cfg, const StepContext& ctx = {}) {
  if (tr.empty()) throw std::invalid_argument("train_cumulative: empty training set");
  cfg.validate();
  if (!cfg.allow_memory_relaxation) {
    throw std::runtime_error(
        "train_cumulative: unbounded example storage requires the memory relaxation "
        "(allow_memory_relaxation)");
  }
  mem.capacity = 0;  // capacity is not enforced for the offline reference
  for (const auto& ex : tr.examples) {
    mem.stored_examples.push_back(ex);
    ++mem.seen_count;
  }
  Dataset unioned;
  unioned.class_count = tr.class_count;
  unioned.feature_dim = tr.feature_dim;
  unioned.image_side = tr.image_side;
  unioned.examples = mem.stored_examples;

  Hypothesis h = init_hypothesis(h_prev.layer_sizes, cfg.seed);
  detail::sgd_epochs(h, unioned, cfg, ctx, nullptr, nullptr);
  return {std::move(h), std::move(mem)};
}

// Mini-batches mixed from the reservoir and the new batch; afterwards every
// new example streams through the reservoir.
inline StrategyResult train_rehearsal(const Hypothesis& h_prev, const Dataset& tr,
                                      ExternalMemory mem, std::optional<int> /*task_label*/,
                                      const TrainConfig& cfg, const StepContext& ctx = {}) {
  if (tr.empty()) throw std::invalid_argument("train_rehearsal: empty training set");
  cfg.validate();
  if (cfg.buffer_capacity == 0) {
    throw std::invalid_argument("train_rehearsal: buffer_capacity must be >= 1 (use naive)");
  }
  mem.capacity = cfg.buffer_capacity;
  if (mem.stored_examples.size() > mem.capacity) {
    throw std::invalid_argument("train_rehearsal: memory already over capacity");
  }
  Hypothesis h = h_prev;
  detail::sgd_epochs(h, tr, cfg, ctx, &mem, nullptr);
  Rng reservoir_rng(
      mix_seed(cfg.seed, static_cast<std::uint64_t>(ctx.step_index), detail::kReservoirStream));
  for (const auto& ex : tr.examples) reservoir_update(mem, ex, reservoir_rng);
  return {std::move(h), std::move(mem)};
}

// Quadratic parameter-anchoring penalty weighted by the diagonal Fisher:
// task loss + (lambda/2) * sum over anchors of F_k (theta_k - theta*_k)^2.
// One anchor per completed batch when labels are absent (or forced per
// batch); with labels, a repeated label replaces its previous anchor so each
// task keeps exactly one.
inline StrategyResult train_ewc(const Hypothesis& h_prev, const Dataset& tr, ExternalMemory mem,
                                std::optional<int> task_label, const TrainConfig& cfg,
                                const StepContext& ctx = {}) {
  if (tr.empty()) throw std::invalid_argument("train_ewc: empty training set");
  cfg.validate();

  detail::PenaltyFn penalty;
  if (cfg.lambda_ewc > 0.0 && !mem.anchors.empty()) {
    penalty = [&mem, &cfg](GradientVector& grad, const Hypothesis& h) {
      for (const auto& anchor : mem.anchors) {
        for (std::size_t k = 0; k < grad.values.size(); ++k) {
          const double dev = static_cast<double>(h.params[k]) - anchor.anchor_params[k];
          grad.values[k] += static_cast<float>(cfg.lambda_ewc * anchor.fisher_diag[k] * dev);
        }
      }
    };
  }
  Hypothesis h = h_prev;
  detail::sgd_epochs(h, tr, cfg, ctx, nullptr, penalty);

  FisherAnchor anchor;
  anchor.anchor_params = h.params;
  anchor.fisher_diag = estimate_fisher_diag(
      h, tr, cfg.fisher_samples,
      mix_seed(cfg.seed, static_cast<std::uint64_t>(ctx.step_index), detail::kFisherStream),
      ctx.ops);
  anchor.task_label = task_label;
  const bool consolidate = task_label.has_value() && !cfg.ewc_per_batch_anchors;
  if (consolidate && !mem.anchors.empty() && mem.anchors.back().task_label == task_label) {
    mem.anchors.back() = std::move(anchor);
  } else {
    mem.anchors.push_back(std::move(anchor));
  }
  return {std::move(h), std::move(mem)};
}

inline std::vector<std::string> strategy_names() {
  return {"naive", "cumulative", "rehearsal", "ewc"};
}

inline StrategyFn strategy_by_name(const std::string& name) {
  if (name == "naive") return train_naive;
  if (name == "cumulative") return train_cumulative;
  if (name == "rehearsal") return train_rehearsal;
  if (name == "ewc") return train_ewc;
  std::string known;
  for (const auto& n : strategy_names()) known += (known.empty() ? "" : ", ") + n;
  throw std::invalid_argument("unknown strategy '" + name + "' (known: " + known + ")");
}

}  // namespace cleval
