#pragma once

// Task-sequence construction: content updates (new instances / new concepts /
// both), task-label structure (single / multi / mixed incremental task), and
// the label regime that controls how distribution changes are signaled.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "rng.hpp"

namespace cleval {

enum class ScenarioKind { SIT, MT, MIT };
enum class UpdateType { NI, NC, NIC };
enum class LabelRegime { none, sparse, oracle };

inline std::string to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::SIT: return "SIT";
    case ScenarioKind::MT: return "MT";
    default: return "MIT";
  }
}
inline std::string to_string(UpdateType u) {
  switch (u) {
    case UpdateType::NI: return "NI";
    case UpdateType::NC: return "NC";
    default: return "NIC";
  }
}
inline std::string to_string(LabelRegime r) {
  switch (r) {
    case LabelRegime::none: return "none";
    case LabelRegime::sparse: return "sparse";
    default: return "oracle";
  }
}

// Per-task feature transform, kept so tests can invert it and run records can
// describe the task stream.
struct TaskTransform {
  enum class Kind { identity, permute, rotate };
  Kind kind = Kind::identity;
  std::vector<int> permutation;  // kind == permute
  double angle_deg = 0.0;        // kind == rotate
};

struct TaskBatch {
  Dataset train;
  Dataset test;
  std::optional<int> task_label;
  int index = 1;  // position in the stream, 1-based
};

struct Scenario {
  std::vector<TaskBatch> batches;
  ScenarioKind kind = ScenarioKind::MT;
  UpdateType update_type = UpdateType::NC;
  LabelRegime label_regime = LabelRegime::oracle;
  bool test_time_labels = false;
  int global_class_count = 0;
  std::vector<TaskTransform> transforms;  // parallel to batches

  std::string constructor;              // "split" | "permuted" | "rotated" | "nic"
  std::map<std::string, double> params; // constructor arguments, for run records

  std::size_t task_count() const { return batches.size(); }
};

namespace detail {

inline std::set<int> class_set(const Dataset& ds) {
  std::set<int> s;
  for (const auto& ex : ds.examples) s.insert(ex.label);
  return s;
}

inline Dataset subset_of_classes(const Dataset& ds, const std::set<int>& classes) {
  Dataset out;
  out.class_count = ds.class_count;
  out.feature_dim = ds.feature_dim;
  out.image_side = ds.image_side;
  for (const auto& ex : ds.examples) {
    if (classes.count(ex.label)) out.examples.push_back(ex);
  }
  return out;
}

inline Dataset permute_features(const Dataset& ds, const std::vector<int>& perm) {
  Dataset out = ds;
  for (auto& ex : out.examples) {
    std::vector<float> f(ex.features.size());
    for (std::size_t d = 0; d < f.size(); ++d) f[d] = ex.features[perm[d]];
    ex.features = std::move(f);
  }
  return out;
}

// Rotation about the image center with bilinear interpolation; pixels that
// sample outside the grid read as zero.
inline std::vector<float> rotate_image(const std::vector<float>& img, int side,
                                       double angle_deg) {
  constexpr double deg2rad = 0.017453292519943295;
  const double c = std::cos(angle_deg * deg2rad);
  const double s = std::sin(angle_deg * deg2rad);
  const double center = (side - 1) / 2.0;
  std::vector<float> out(img.size(), 0.0f);
  for (int r = 0; r < side; ++r) {
    for (int col = 0; col < side; ++col) {
      const double x = col - center;
      const double y = r - center;
      // inverse map: where does this output pixel come from
      const double sx = c * x + s * y + center;
      const double sy = -s * x + c * y + center;
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0;
      const double fy = sy - y0;
      auto at = [&](int yy, int xx) -> double {
        if (yy < 0 || yy >= side || xx < 0 || xx >= side) return 0.0;
        return img[static_cast<std::size_t>(yy) * side + xx];
      };
      const double v = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
                       fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
      out[static_cast<std::size_t>(r) * side + col] = static_cast<float>(v);
    }
  }
  return out;
}

inline Dataset rotate_dataset(const Dataset& ds, double angle_deg) {
  Dataset out = ds;
  for (auto& ex : out.examples) {
    ex.features = rotate_image(ex.features, *ds.image_side, angle_deg);
  }
  return out;
}

}  // namespace detail

// Re-checks every structural invariant of the declared kind, update type and
// label regime; throws on the first violation.
inline void validate_scenario(const Scenario& sc) {
  if (sc.batches.empty()) throw std::invalid_argument("scenario: no batches");
  if (sc.transforms.size() != sc.batches.size()) {
    throw std::invalid_argument("scenario: transforms not parallel to batches");
  }
  std::vector<int> labels;
  for (std::size_t i = 0; i < sc.batches.size(); ++i) {
    const auto& b = sc.batches[i];
    if (b.index != static_cast<int>(i) + 1) throw std::invalid_argument("scenario: bad batch index");
    if (b.train.empty() || b.test.empty()) throw std::invalid_argument("scenario: empty batch");
    if (b.train.feature_dim != b.test.feature_dim) {
      throw std::invalid_argument("scenario: train/test dimension mismatch");
    }
    if (b.task_label) labels.push_back(*b.task_label);
    for (const auto& ex : b.train.examples) {
      if (ex.label < 0 || ex.label >= sc.global_class_count) {
        throw std::invalid_argument("scenario: class id outside the global class space");
      }
    }
  }

  // label-regime constraints
  if (sc.label_regime == LabelRegime::none && !labels.empty()) {
    throw std::invalid_argument("scenario: label regime 'none' but task labels present");
  }
  if (sc.label_regime == LabelRegime::oracle) {
    if (labels.size() != sc.batches.size()) {
      throw std::invalid_argument("scenario: oracle regime requires a label on every batch");
    }
    // the label must change exactly when the underlying distribution changes.
    // Adjacent batches that keep the label must keep the feature transform and
    // must not switch to a disjoint class group.
    for (std::size_t i = 1; i < sc.batches.size(); ++i) {
      if (labels[i] != labels[i - 1]) continue;
      const auto& ta = sc.transforms[i - 1];
      const auto& tb = sc.transforms[i];
      if (ta.kind != tb.kind || ta.permutation != tb.permutation ||
          ta.angle_deg != tb.angle_deg) {
        throw std::invalid_argument("scenario: transform changed without an oracle label change");
      }
      const auto a = detail::class_set(sc.batches[i - 1].train);
      const auto b = detail::class_set(sc.batches[i].train);
      std::vector<int> inter;
      std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
      if (inter.empty()) {
        throw std::invalid_argument("scenario: class group changed without an oracle label change");
      }
    }
  }

  // task structure (present labels only)
  const bool all_equal =
      labels.empty() ||
      std::all_of(labels.begin(), labels.end(), [&](int l) { return l == labels.front(); });
  const bool all_distinct = std::set<int>(labels.begin(), labels.end()).size() == labels.size();
  switch (sc.kind) {
    case ScenarioKind::SIT:
      if (!all_equal) throw std::invalid_argument("scenario: SIT requires all-equal task labels");
      break;
    case ScenarioKind::MT:
      if (!all_distinct) {
        throw std::invalid_argument("scenario: MT requires pairwise-distinct task labels");
      }
      break;
    case ScenarioKind::MIT:
      if (all_equal || all_distinct) {
        throw std::invalid_argument(
            "scenario: MIT requires at least one repeated and one distinct label pair");
      }
      break;
  }

  // content-update structure
  std::vector<std::set<int>> class_sets;
  for (const auto& b : sc.batches) class_sets.push_back(detail::class_set(b.train));
  bool pairwise_disjoint = true;
  bool all_same = true;
  for (std::size_t i = 0; i < class_sets.size(); ++i) {
    for (std::size_t j = i + 1; j < class_sets.size(); ++j) {
      std::vector<int> inter;
      std::set_intersection(class_sets[i].begin(), class_sets[i].end(), class_sets[j].begin(),
                            class_sets[j].end(), std::back_inserter(inter));
      if (!inter.empty()) pairwise_disjoint = false;
      if (class_sets[i] != class_sets[j]) all_same = false;
    }
  }
  switch (sc.update_type) {
    case UpdateType::NC:
      if (!pairwise_disjoint) {
        throw std::invalid_argument("scenario: NC requires pairwise-disjoint class sets");
      }
      break;
    case UpdateType::NI:
      if (!all_same) throw std::invalid_argument("scenario: NI requires one shared class set");
      break;
    case UpdateType::NIC:
      if (class_sets.size() >= 2 && (pairwise_disjoint || all_same)) {
        throw std::invalid_argument("scenario: NIC must violate both the NC and NI patterns");
      }
      break;
  }
}

// Disjoint class groups in shuffled order, one group per task.
inline Scenario make_split(const Dataset& ds, int classes_per_task, std::uint64_t seed,
                           double test_fraction = 0.25) {
  if (classes_per_task < 1 || ds.class_count % classes_per_task != 0) {
    throw std::invalid_argument("make_split: class count " + std::to_string(ds.class_count) +
                                " is not divisible by classes_per_task");
  }
  const int n_tasks = ds.class_count / classes_per_task;
  std::vector<int> order(ds.class_count);
  for (int c = 0; c < ds.class_count; ++c) order[c] = c;
  Rng rng(mix_seed(seed, 0));
  rng.shuffle(order);

  const auto [train_all, test_all] = split_train_test(ds, test_fraction, mix_seed(seed, 1));

  Scenario sc;
  sc.kind = ScenarioKind::MT;
  sc.update_type = UpdateType::NC;
  sc.label_regime = LabelRegime::oracle;
  sc.global_class_count = ds.class_count;
  sc.constructor = "split";
  sc.params = {{"classes_per_task", static_cast<double>(classes_per_task)},
               {"seed", static_cast<double>(seed)},
               {"test_fraction", test_fraction}};
  for (int t = 0; t < n_tasks; ++t) {
    std::set<int> group(order.begin() + static_cast<std::size_t>(t) * classes_per_task,
                        order.begin() + static_cast<std::size_t>(t + 1) * classes_per_task);
    TaskBatch b;
    b.train = detail::subset_of_classes(train_all, group);
    b.test = detail::subset_of_classes(test_all, group);
    b.task_label = t + 1;
    b.index = t + 1;
    sc.batches.push_back(std::move(b));
    sc.transforms.push_back({});
  }
  return sc;
}

// Task 1 is the identity; each later task applies a fresh random feature
// permutation, derived from the task's own seed material.
inline Scenario make_permuted(const Dataset& ds, int n_tasks, std::uint64_t seed,
                              double test_fraction = 0.25) {
  if (n_tasks < 1) throw std::invalid_argument("make_permuted: n_tasks must be >= 1");
  const auto [train_base, test_base] = split_train_test(ds, test_fraction, mix_seed(seed, 1));

  Scenario sc;
  sc.kind = ScenarioKind::MT;
  sc.update_type = UpdateType::NI;
  sc.label_regime = LabelRegime::oracle;
  sc.global_class_count = ds.class_count;
  sc.constructor = "permuted";
  sc.params = {{"n_tasks", static_cast<double>(n_tasks)},
               {"seed", static_cast<double>(seed)},
               {"test_fraction", test_fraction}};
  for (int t = 0; t < n_tasks; ++t) {
    TaskTransform tr;
    TaskBatch b;
    if (t == 0) {
      b.train = train_base;
      b.test = test_base;
    } else {
      tr.kind = TaskTransform::Kind::permute;
      tr.permutation.resize(ds.feature_dim);
      for (int d = 0; d < ds.feature_dim; ++d) tr.permutation[d] = d;
      Rng rng(mix_seed(seed, 2, static_cast<std::uint64_t>(t)));
      rng.shuffle(tr.permutation);
      b.train = detail::permute_features(train_base, tr.permutation);
      b.test = detail::permute_features(test_base, tr.permutation);
    }
    b.task_label = t + 1;
    b.index = t + 1;
    sc.batches.push_back(std::move(b));
    sc.transforms.push_back(std::move(tr));
  }
  return sc;
}

// Task k rotates every image by angles[k] about the center (bilinear, zero
// fill outside the grid).
inline Scenario make_rotated(const Dataset& ds, const std::vector<double>& angles,
                             std::uint64_t seed, double test_fraction = 0.25) {
  if (!ds.image_side) {
    throw std::invalid_argument("make_rotated: dataset has no image geometry");
  }
  if (angles.empty()) throw std::invalid_argument("make_rotated: angles must be non-empty");
  const auto [train_base, test_base] = split_train_test(ds, test_fraction, mix_seed(seed, 1));

  Scenario sc;
  sc.kind = ScenarioKind::MT;
  sc.update_type = UpdateType::NI;
  sc.label_regime = LabelRegime::oracle;
  sc.global_class_count = ds.class_count;
  sc.constructor = "rotated";
  sc.params = {{"n_tasks", static_cast<double>(angles.size())},
               {"seed", static_cast<double>(seed)},
               {"test_fraction", test_fraction}};
  for (std::size_t t = 0; t < angles.size(); ++t) {
    sc.params["angle_" + std::to_string(t + 1)] = angles[t];
  }
  for (std::size_t t = 0; t < angles.size(); ++t) {
    TaskTransform tr;
    tr.kind = TaskTransform::Kind::rotate;
    tr.angle_deg = angles[t];
    TaskBatch b;
    b.train = detail::rotate_dataset(train_base, angles[t]);
    b.test = detail::rotate_dataset(test_base, angles[t]);
    b.task_label = static_cast<int>(t) + 1;
    b.index = static_cast<int>(t) + 1;
    sc.batches.push_back(std::move(b));
    sc.transforms.push_back(std::move(tr));
  }
  return sc;
}

// New-concept batches interleaved with revisit batches that carry fresh
// samples of previously seen class groups. Revisit r is inserted after
// new-concept batch r+1 (round-robin over leftovers at the end) and reuses
// the task label of the group it revisits.
inline Scenario make_nic(const Dataset& ds, int classes_per_task, int revisits,
                         std::uint64_t seed, double test_fraction = 0.25) {
  if (classes_per_task < 1 || ds.class_count % classes_per_task != 0) {
    throw std::invalid_argument("make_nic: class count is not divisible by classes_per_task");
  }
  if (revisits < 0) throw std::invalid_argument("make_nic: revisits must be >= 0");
  const int n_groups = ds.class_count / classes_per_task;
  if (revisits >= 1 && n_groups < 2) {
    throw std::invalid_argument("make_nic: need at least 2 class groups to mix repeated and "
                                "distinct task labels");
  }
  if (revisits == 0) {
    Scenario sc = make_split(ds, classes_per_task, seed, test_fraction);
    sc.constructor = "nic";
    sc.params["revisits"] = 0.0;
    return sc;
  }

  std::vector<int> order(ds.class_count);
  for (int c = 0; c < ds.class_count; ++c) order[c] = c;
  Rng rng(mix_seed(seed, 0));
  rng.shuffle(order);
  std::vector<std::set<int>> groups(n_groups);
  for (int g = 0; g < n_groups; ++g) {
    groups[g] = std::set<int>(order.begin() + static_cast<std::size_t>(g) * classes_per_task,
                              order.begin() + static_cast<std::size_t>(g + 1) * classes_per_task);
  }
  const auto [train_all, test_all] = split_train_test(ds, test_fraction, mix_seed(seed, 1));

  // schedule: which group each revisit goes back to, choosing uniformly among
  // the groups already introduced at that point in the stream
  struct Slot { int group; bool revisit; };
  std::vector<Slot> slots;
  Rng pick(mix_seed(seed, 2));
  int introduced = 0;
  int pending = revisits;
  for (int g = 0; g < n_groups; ++g) {
    slots.push_back({g, false});
    ++introduced;
    if (g >= 1 && pending > 0) {
      slots.push_back({static_cast<int>(pick.index(static_cast<std::size_t>(introduced))), true});
      --pending;
    }
  }
  while (pending-- > 0) {
    slots.push_back({static_cast<int>(pick.index(static_cast<std::size_t>(n_groups))), true});
  }

  // carve each group's train pool into as many disjoint chunks as it has
  // appearances, so revisits carry previously unseen samples
  std::vector<int> appearances(n_groups, 0);
  for (const auto& s : slots) appearances[s.group]++;
  std::vector<std::vector<std::size_t>> pools(n_groups);
  {
    std::vector<std::vector<std::size_t>> by_group(n_groups);
    for (std::size_t i = 0; i < train_all.examples.size(); ++i) {
      const int label = train_all.examples[i].label;
      for (int g = 0; g < n_groups; ++g) {
        if (groups[g].count(label)) by_group[g].push_back(i);
      }
    }
    for (int g = 0; g < n_groups; ++g) {
      Rng shuffle_rng(mix_seed(seed, 3, static_cast<std::uint64_t>(g)));
      shuffle_rng.shuffle(by_group[g]);
      pools[g] = std::move(by_group[g]);
    }
  }
  std::vector<std::size_t> next_chunk(n_groups, 0);

  Scenario sc;
  sc.kind = ScenarioKind::MIT;
  sc.update_type = UpdateType::NIC;
  sc.label_regime = LabelRegime::oracle;
  sc.global_class_count = ds.class_count;
  sc.constructor = "nic";
  sc.params = {{"classes_per_task", static_cast<double>(classes_per_task)},
               {"revisits", static_cast<double>(revisits)},
               {"seed", static_cast<double>(seed)},
               {"test_fraction", test_fraction}};
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const int g = slots[k].group;
    const auto& pool = pools[g];
    const std::size_t chunks = appearances[g];
    const std::size_t lo = pool.size() * next_chunk[g] / chunks;
    const std::size_t hi = pool.size() * (next_chunk[g] + 1) / chunks;
    ++next_chunk[g];
    TaskBatch b;
    b.train.class_count = ds.class_count;
    b.train.feature_dim = ds.feature_dim;
    b.train.image_side = ds.image_side;
    for (std::size_t p = lo; p < hi; ++p) b.train.examples.push_back(train_all.examples[pool[p]]);
    b.test = detail::subset_of_classes(test_all, groups[g]);
    b.task_label = g + 1;
    b.index = static_cast<int>(k) + 1;
    sc.batches.push_back(std::move(b));
    sc.transforms.push_back({});
  }
  return sc;
}

// Label regime transitions. 'none' drops every label (the stream becomes
// indistinguishable from a single incremental task); 'sparse' keeps each
// label independently with keep_prob; 'oracle' is the identity.
inline Scenario apply_label_regime(Scenario sc, LabelRegime regime, std::uint64_t seed,
                                   double keep_prob = 0.5) {
  if (sc.label_regime != LabelRegime::oracle) {
    throw std::invalid_argument("apply_label_regime: scenario must carry oracle labels");
  }
  if (regime == LabelRegime::oracle) return sc;
  Rng rng(mix_seed(seed, 0xfade));
  std::vector<int> present;
  for (auto& b : sc.batches) {
    if (regime == LabelRegime::none) {
      b.task_label.reset();
    } else if (!rng.bernoulli(keep_prob)) {
      b.task_label.reset();
    }
    if (b.task_label) present.push_back(*b.task_label);
  }
  sc.label_regime = regime;
  // reclassify the task structure from the surviving labels
  const bool all_equal =
      present.empty() ||
      std::all_of(present.begin(), present.end(), [&](int l) { return l == present.front(); });
  const bool all_distinct =
      std::set<int>(present.begin(), present.end()).size() == present.size();
  if (all_equal) {
    sc.kind = ScenarioKind::SIT;
  } else if (all_distinct) {
    sc.kind = ScenarioKind::MT;
  } else {
    sc.kind = ScenarioKind::MIT;
  }
  return sc;
}

}  // namespace cleval
