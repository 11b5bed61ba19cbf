#pragma once

// Dense tanh/softmax classifier with a flat parameter vector and exact
// multiply-add accounting. The parameter layout is: every weight matrix
// (row-major, out x in) layer by layer, then every bias vector layer by
// layer. All stored tensors are 32-bit floats; arithmetic runs in double.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "rng.hpp"

namespace cleval {

// Multiply-add tallies. A backward pass is booked at exactly twice the
// forward multiply-adds of each traversed layer.
struct OpsCounter {
  long long forward_madds = 0;
  long long backward_madds = 0;

  long long total() const { return forward_madds + backward_madds; }
};

struct GradientVector {
  std::vector<float> values;
};

struct Hypothesis {
  std::vector<int> layer_sizes;
  std::vector<float> params;

  bool operator==(const Hypothesis&) const = default;

  int layer_count() const { return static_cast<int>(layer_sizes.size()) - 1; }
  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (int l = 0; l < layer_count(); ++l) {
      n += static_cast<std::size_t>(layer_sizes[l]) * layer_sizes[l + 1] + layer_sizes[l + 1];
    }
    return n;
  }

  // multiply-adds of one forward pass on one sample
  long long madds_per_sample() const {
    long long n = 0;
    for (int l = 0; l < layer_count(); ++l) {
      n += static_cast<long long>(layer_sizes[l]) * layer_sizes[l + 1];
    }
    return n;
  }

  std::size_t weight_offset(int layer) const {
    std::size_t off = 0;
    for (int l = 0; l < layer; ++l) {
      off += static_cast<std::size_t>(layer_sizes[l]) * layer_sizes[l + 1];
    }
    return off;
  }

  std::size_t bias_offset(int layer) const {
    std::size_t off = weight_offset(layer_count());
    for (int l = 0; l < layer; ++l) off += layer_sizes[l + 1];
    return off;
  }
};

// Glorot-uniform weights, zero biases; bit-reproducible per seed.
inline Hypothesis init_hypothesis(const std::vector<int>& layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 2) {
    throw std::invalid_argument("init_hypothesis: need at least input and output sizes");
  }
  for (int s : layer_sizes) {
    if (s < 1) throw std::invalid_argument("init_hypothesis: every layer size must be >= 1");
  }
  Hypothesis h;
  h.layer_sizes = layer_sizes;
  h.params.assign(h.param_count(), 0.0f);
  Rng rng(mix_seed(seed, 0x1ea1));
  for (int l = 0; l < h.layer_count(); ++l) {
    const int in = layer_sizes[l], out = layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / (in + out));
    float* w = h.params.data() + h.weight_offset(l);
    for (int k = 0; k < in * out; ++k) {
      w[k] = static_cast<float>(rng.uniform(-bound, bound));
    }
  }
  return h;
}

namespace detail {

struct ForwardPass {
  std::vector<std::vector<double>> activations;  // activations[0] = input, back() = probabilities
  std::vector<double> logits;
};

inline ForwardPass forward_pass(const Hypothesis& h, std::span<const float> x) {
  if (static_cast<int>(x.size()) != h.input_dim()) {
    throw std::invalid_argument("forward: input has dimension " + std::to_string(x.size()) +
                                ", expected " + std::to_string(h.input_dim()));
  }
  ForwardPass fp;
  fp.activations.resize(h.layer_count() + 1);
  fp.activations[0].assign(x.begin(), x.end());
  for (int l = 0; l < h.layer_count(); ++l) {
    const int in = h.layer_sizes[l], out = h.layer_sizes[l + 1];
    const float* w = h.params.data() + h.weight_offset(l);
    const float* b = h.params.data() + h.bias_offset(l);
    const auto& a = fp.activations[l];
    std::vector<double> z(out);
    for (int o = 0; o < out; ++o) {
      double acc = b[o];
      const float* row = w + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) acc += static_cast<double>(row[i]) * a[i];
      z[o] = acc;
    }
    if (l + 1 < h.layer_count()) {
      for (auto& v : z) v = std::tanh(v);
      fp.activations[l + 1] = std::move(z);
    } else {
      fp.logits = z;
      double mx = z[0];
      for (double v : z) mx = std::max(mx, v);
      double sum = 0.0;
      for (auto& v : z) {
        v = std::exp(v - mx);
        sum += v;
      }
      for (auto& v : z) v /= sum;
      fp.activations[l + 1] = std::move(z);
    }
  }
  return fp;
}

}  // namespace detail

// Class probabilities for one input; books Σ in·out forward multiply-adds.
inline std::vector<double> forward(const Hypothesis& h, std::span<const float> x,
                                   OpsCounter* ops = nullptr) {
  auto fp = detail::forward_pass(h, x);
  if (ops) ops->forward_madds += h.madds_per_sample();
  return fp.activations.back();
}

// Mean cross-entropy over the batch and its gradient via backpropagation.
inline std::pair<double, GradientVector> loss_and_grad(const Hypothesis& h,
                                                       std::span<const LabeledExample> batch,
                                                       OpsCounter* ops = nullptr) {
  if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
  const int classes = h.output_dim();
  const int layers = h.layer_count();
  std::vector<double> grad(h.param_count(), 0.0);
  double loss = 0.0;
  for (const auto& ex : batch) {
    if (ex.label < 0 || ex.label >= classes) {
      throw std::invalid_argument("loss_and_grad: label " + std::to_string(ex.label) +
                                  " outside [0, " + std::to_string(classes) + ")");
    }
    auto fp = detail::forward_pass(h, ex.features);
    // -log p via logits to stay finite when a probability underflows
    double mx = fp.logits[0];
    for (double v : fp.logits) mx = std::max(mx, v);
    double lse = 0.0;
    for (double v : fp.logits) lse += std::exp(v - mx);
    loss += (mx + std::log(lse)) - fp.logits[ex.label];

    std::vector<double> delta = fp.activations.back();
    delta[ex.label] -= 1.0;
    for (int l = layers - 1; l >= 0; --l) {
      const int in = h.layer_sizes[l], out = h.layer_sizes[l + 1];
      const float* w = h.params.data() + h.weight_offset(l);
      double* gw = grad.data() + h.weight_offset(l);
      double* gb = grad.data() + h.bias_offset(l);
      const auto& a = fp.activations[l];
      for (int o = 0; o < out; ++o) {
        double* grow = gw + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) grow[i] += delta[o] * a[i];
        gb[o] += delta[o];
      }
      if (l > 0) {
        std::vector<double> prev(in, 0.0);
        for (int o = 0; o < out; ++o) {
          const float* row = w + static_cast<std::size_t>(o) * in;
          for (int i = 0; i < in; ++i) prev[i] += static_cast<double>(row[i]) * delta[o];
        }
        for (int i = 0; i < in; ++i) prev[i] *= 1.0 - a[i] * a[i];  // tanh'
        delta = std::move(prev);
      }
    }
  }
  if (ops) {
    const long long per_sample = h.madds_per_sample();
    ops->forward_madds += per_sample * static_cast<long long>(batch.size());
    ops->backward_madds += 2 * per_sample * static_cast<long long>(batch.size());
  }
  const double inv_m = 1.0 / static_cast<double>(batch.size());
  GradientVector g;
  g.values.resize(grad.size());
  for (std::size_t k = 0; k < grad.size(); ++k) {
    g.values[k] = static_cast<float>(grad[k] * inv_m);
  }
  return {loss * inv_m, std::move(g)};
}

inline void sgd_step(Hypothesis& h, const GradientVector& g, double lr) {
  if (lr <= 0.0) throw std::invalid_argument("sgd_step: lr must be positive");
  if (g.values.size() != h.params.size()) {
    throw std::invalid_argument("sgd_step: gradient length does not match parameter count");
  }
  const float lrf = static_cast<float>(lr);
  for (std::size_t k = 0; k < h.params.size(); ++k) {
    h.params[k] -= lrf * g.values[k];
  }
}

// Predicted class: argmax probability, ties resolved to the lowest class id.
// `allowed` restricts the argmax to a subset of classes (task-conditioned
// evaluation under permanent task labels).
inline int predict(const Hypothesis& h, std::span<const float> x,
                   const std::vector<int>* allowed = nullptr, OpsCounter* ops = nullptr) {
  const auto probs = forward(h, x, ops);
  int best = -1;
  double best_p = -1.0;
  if (allowed) {
    for (int c : *allowed) {
      if (c >= 0 && c < static_cast<int>(probs.size()) && probs[c] > best_p) {
        best_p = probs[c];
        best = c;
      }
    }
  } else {
    for (int c = 0; c < static_cast<int>(probs.size()); ++c) {
      if (probs[c] > best_p) {
        best_p = probs[c];
        best = c;
      }
    }
  }
  return best;
}

inline double evaluate_accuracy(const Hypothesis& h, const Dataset& test,
                                const std::vector<int>* allowed = nullptr,
                                OpsCounter* ops = nullptr) {
  if (test.empty()) throw std::invalid_argument("evaluate_accuracy: empty test set");
  long long correct = 0;
  for (const auto& ex : test.examples) {
    if (predict(h, ex.features, allowed, ops) == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

// Model footprint in bits: 32 per parameter.
inline long long mem_of(const Hypothesis& h) {
  return 32LL * static_cast<long long>(h.param_count());
}

}  // namespace cleval
