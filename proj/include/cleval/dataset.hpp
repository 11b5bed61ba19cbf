#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rng.hpp"

namespace cleval {

struct LabeledExample {
  std::vector<float> features;
  int label = 0;

  bool operator==(const LabeledExample&) const = default;
};

// A fixed pool of labeled examples over a global class-id space. image_side
// is set when the features are a square image laid out row-major, which is
// what makes rotation scenarios applicable.
struct Dataset {
  std::vector<LabeledExample> examples;
  int class_count = 0;
  int feature_dim = 0;
  std::optional<int> image_side;

  bool operator==(const Dataset&) const = default;
  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
};

// Isotropic Gaussian blobs: one mean per class drawn once from uniform(-2,2)^d,
// then per_class samples at standard deviation `spread` around it.
inline Dataset gen_blobs(int class_count, int feature_dim, int per_class,
                         double spread, std::uint64_t seed) {
  if (class_count < 1 || feature_dim < 1 || per_class < 1) {
    throw std::invalid_argument("gen_blobs: class_count, feature_dim and per_class must be >= 1");
  }
  if (spread <= 0.0) {
    throw std::invalid_argument("gen_blobs: spread must be positive");
  }
  Rng mean_rng(mix_seed(seed, 0));
  std::vector<std::vector<double>> means(class_count, std::vector<double>(feature_dim));
  for (auto& m : means) {
    for (auto& v : m) v = mean_rng.uniform(-2.0, 2.0);
  }
  Dataset ds;
  ds.class_count = class_count;
  ds.feature_dim = feature_dim;
  ds.examples.reserve(static_cast<std::size_t>(class_count) * per_class);
  for (int c = 0; c < class_count; ++c) {
    Rng rng(mix_seed(seed, 1, static_cast<std::uint64_t>(c)));
    for (int s = 0; s < per_class; ++s) {
      LabeledExample ex;
      ex.label = c;
      ex.features.resize(feature_dim);
      for (int d = 0; d < feature_dim; ++d) {
        ex.features[d] = static_cast<float>(means[c][d] + spread * rng.normal());
      }
      ds.examples.push_back(std::move(ex));
    }
  }
  return ds;
}

// Square-image classes: a fixed random binary template per class plus
// Gaussian pixel noise, clamped to [0, 1].
inline Dataset gen_patterns(int class_count, int image_side, int per_class,
                            double noise_std, std::uint64_t seed) {
  if (class_count < 1 || per_class < 1) {
    throw std::invalid_argument("gen_patterns: class_count and per_class must be >= 1");
  }
  if (image_side < 4) {
    throw std::invalid_argument("gen_patterns: image_side must be >= 4");
  }
  if (noise_std < 0.0) {
    throw std::invalid_argument("gen_patterns: noise_std must be >= 0");
  }
  const int dim = image_side * image_side;
  Rng template_rng(mix_seed(seed, 0));
  std::vector<std::vector<float>> templates(class_count, std::vector<float>(dim));
  for (auto& t : templates) {
    for (auto& v : t) v = template_rng.bernoulli(0.5) ? 1.0f : 0.0f;
  }
  Dataset ds;
  ds.class_count = class_count;
  ds.feature_dim = dim;
  ds.image_side = image_side;
  ds.examples.reserve(static_cast<std::size_t>(class_count) * per_class);
  for (int c = 0; c < class_count; ++c) {
    Rng rng(mix_seed(seed, 1, static_cast<std::uint64_t>(c)));
    for (int s = 0; s < per_class; ++s) {
      LabeledExample ex;
      ex.label = c;
      ex.features.resize(dim);
      for (int d = 0; d < dim; ++d) {
        const double v = templates[c][d] + noise_std * rng.normal();
        ex.features[d] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
      ds.examples.push_back(std::move(ex));
    }
  }
  return ds;
}

namespace detail {

inline std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& ds) {
  std::vector<std::vector<std::size_t>> by_class(ds.class_count);
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    by_class[ds.examples[i].label].push_back(i);
  }
  return by_class;
}

}  // namespace detail

// Stratified split. Per-class test counts start at floor(n_c * fraction) and
// the remainder up to round(total * fraction) goes to the classes with the
// largest fractional parts (ties broken by class id). Every class keeps at
// least one example on each side.
inline std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, double test_fraction,
                                                    std::uint64_t seed) {
  if (test_fraction <= 0.0 || test_fraction >= 1.0) {
    throw std::invalid_argument("split_train_test: test_fraction must be in (0, 1)");
  }
  auto by_class = detail::indices_by_class(ds);
  for (int c = 0; c < ds.class_count; ++c) {
    if (by_class[c].size() < 2) {
      throw std::invalid_argument("split_train_test: class " + std::to_string(c) +
                                  " has fewer than 2 samples");
    }
  }
  const auto target_total =
      static_cast<std::size_t>(std::llround(static_cast<double>(ds.size()) * test_fraction));
  std::vector<std::size_t> test_counts(ds.class_count);
  std::vector<std::pair<double, int>> fraction_rank;
  std::size_t assigned = 0;
  for (int c = 0; c < ds.class_count; ++c) {
    const double exact = static_cast<double>(by_class[c].size()) * test_fraction;
    test_counts[c] = static_cast<std::size_t>(std::floor(exact));
    fraction_rank.push_back({exact - std::floor(exact), c});
    assigned += test_counts[c];
  }
  std::sort(fraction_rank.begin(), fraction_rank.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t k = 0; assigned < target_total && k < fraction_rank.size(); ++k) {
    const int c = fraction_rank[k].second;
    if (test_counts[c] + 1 < by_class[c].size()) {
      ++test_counts[c];
      ++assigned;
    }
  }
  for (int c = 0; c < ds.class_count; ++c) {
    test_counts[c] = std::clamp<std::size_t>(test_counts[c], 1, by_class[c].size() - 1);
  }

  Dataset train, test;
  train.class_count = test.class_count = ds.class_count;
  train.feature_dim = test.feature_dim = ds.feature_dim;
  train.image_side = test.image_side = ds.image_side;
  for (int c = 0; c < ds.class_count; ++c) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(c)));
    auto idx = by_class[c];
    rng.shuffle(idx);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      (k < test_counts[c] ? test : train).examples.push_back(ds.examples[idx[k]]);
    }
  }
  return {std::move(train), std::move(test)};
}

}  // namespace cleval
