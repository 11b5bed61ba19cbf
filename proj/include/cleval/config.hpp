#pragma once

// Experiment configuration: a JSON document with a fixed schema. Parsing
// collects every field-level problem instead of stopping at the first, and
// unknown keys are rejected at every level.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "harness.hpp"
#include "metrics.hpp"
#include "strategy.hpp"

namespace cleval {

struct DatasetSpec {
  std::string kind;  // "blobs" | "patterns" | "idx"
  int class_count = 8;
  int feature_dim = 16;
  int per_class = 50;
  double spread = 1.0;
  int image_side = 8;
  double noise_std = 0.1;
  std::string images_path;
  std::string labels_path;
};

struct ScenarioSpec {
  std::string kind;  // "split" | "permuted" | "rotated" | "nic"
  int classes_per_task = 2;
  int n_tasks = 5;
  std::vector<double> angles;
  int revisits = 1;
  double test_fraction = 0.25;
  std::string label_regime = "oracle";
  double keep_prob = 0.5;
  bool test_time_labels = false;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  ScenarioSpec scenario;
  std::string strategy_name = "naive";
  TrainConfig train;
  std::vector<std::uint64_t> seeds;
  Budgets budgets;
  bool strict_budgets = false;  // abort a run the moment a budget is violated
  std::optional<int> beta;
  std::optional<double> epsilon;
  std::map<std::string, double> weights = default_score_weights();
  bool reference = false;  // also run the offline cumulative baseline (enables Omega and rho)
  std::string output_dir = "out";
  int mblog_every = 1;
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(std::vector<std::string> problems)
      : std::runtime_error(join(problems)), errors(std::move(problems)) {}
  std::vector<std::string> errors;

 private:
  static std::string join(const std::vector<std::string>& problems) {
    std::string msg = "invalid config:";
    for (const auto& p : problems) msg += "\n  - " + p;
    return msg;
  }
};

namespace detail {

class ConfigReader {
 public:
  explicit ConfigReader(std::vector<std::string>& errors) : errors_(errors) {}

  void reject_unknown(const nlohmann::json& obj, const std::string& where,
                      const std::set<std::string>& known) {
    if (!obj.is_object()) {
      errors_.push_back(where + ": expected an object");
      return;
    }
    for (const auto& [key, value] : obj.items()) {
      if (!known.count(key)) errors_.push_back(where + ": unknown key '" + key + "'");
    }
  }

  template <class T>
  void get(const nlohmann::json& obj, const std::string& where, const std::string& key, T& out,
           bool required = false) {
    if (!obj.is_object() || !obj.contains(key)) {
      if (required) errors_.push_back(where + ": missing required field '" + key + "'");
      return;
    }
    try {
      out = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      errors_.push_back(where + ": field '" + key + "' has the wrong type");
    }
  }

  void require(bool ok, const std::string& message) {
    if (!ok) errors_.push_back(message);
  }

 private:
  std::vector<std::string>& errors_;
};

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text) {
  std::vector<std::string> errors;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError({std::string("syntax: ") + e.what()});
  }

  ExperimentConfig cfg;
  detail::ConfigReader r(errors);
  r.reject_unknown(j, "config",
                   {"dataset", "scenario", "strategy", "seeds", "budgets", "metrics",
                    "output_dir", "mblog_every"});

  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    r.reject_unknown(d, "dataset",
                     {"kind", "class_count", "feature_dim", "per_class", "spread", "image_side",
                      "noise_std", "images", "labels"});
    r.get(d, "dataset", "kind", cfg.dataset.kind, true);
    r.get(d, "dataset", "class_count", cfg.dataset.class_count);
    r.get(d, "dataset", "feature_dim", cfg.dataset.feature_dim);
    r.get(d, "dataset", "per_class", cfg.dataset.per_class);
    r.get(d, "dataset", "spread", cfg.dataset.spread);
    r.get(d, "dataset", "image_side", cfg.dataset.image_side);
    r.get(d, "dataset", "noise_std", cfg.dataset.noise_std);
    r.get(d, "dataset", "images", cfg.dataset.images_path);
    r.get(d, "dataset", "labels", cfg.dataset.labels_path);
    if (d.is_object() && d.contains("kind")) {
      r.require(cfg.dataset.kind == "blobs" || cfg.dataset.kind == "patterns" ||
                    cfg.dataset.kind == "idx",
                "dataset: kind must be one of blobs, patterns, idx");
      if (cfg.dataset.kind == "idx") {
        r.require(!cfg.dataset.images_path.empty() && !cfg.dataset.labels_path.empty(),
                  "dataset: idx needs 'images' and 'labels' paths");
      }
    }
  } else {
    errors.push_back("config: missing required section 'dataset'");
  }

  if (j.contains("scenario")) {
    const auto& s = j["scenario"];
    r.reject_unknown(s, "scenario",
                     {"kind", "classes_per_task", "n_tasks", "angles", "revisits",
                      "test_fraction", "label_regime", "keep_prob", "test_time_labels"});
    r.get(s, "scenario", "kind", cfg.scenario.kind, true);
    r.get(s, "scenario", "classes_per_task", cfg.scenario.classes_per_task);
    r.get(s, "scenario", "n_tasks", cfg.scenario.n_tasks);
    r.get(s, "scenario", "angles", cfg.scenario.angles);
    r.get(s, "scenario", "revisits", cfg.scenario.revisits);
    r.get(s, "scenario", "test_fraction", cfg.scenario.test_fraction);
    r.get(s, "scenario", "label_regime", cfg.scenario.label_regime);
    r.get(s, "scenario", "keep_prob", cfg.scenario.keep_prob);
    r.get(s, "scenario", "test_time_labels", cfg.scenario.test_time_labels);
    if (s.is_object() && s.contains("kind")) {
      r.require(cfg.scenario.kind == "split" || cfg.scenario.kind == "permuted" ||
                    cfg.scenario.kind == "rotated" || cfg.scenario.kind == "nic",
                "scenario: kind must be one of split, permuted, rotated, nic");
      if (cfg.scenario.kind == "rotated") {
        r.require(!cfg.scenario.angles.empty(), "scenario: rotated needs a non-empty 'angles'");
      }
    }
    r.require(cfg.scenario.label_regime == "none" || cfg.scenario.label_regime == "sparse" ||
                  cfg.scenario.label_regime == "oracle",
              "scenario: label_regime must be one of none, sparse, oracle");
    r.require(cfg.scenario.test_fraction > 0.0 && cfg.scenario.test_fraction < 1.0,
              "scenario: test_fraction must be in (0, 1)");
  } else {
    errors.push_back("config: missing required section 'scenario'");
  }

  if (j.contains("strategy")) {
    const auto& s = j["strategy"];
    r.reject_unknown(s, "strategy",
                     {"name", "epochs", "batch_size", "lr", "lambda_ewc", "buffer_capacity",
                      "replay_fraction", "hidden_sizes", "fisher_samples",
                      "ewc_per_batch_anchors"});
    r.get(s, "strategy", "name", cfg.strategy_name, true);
    r.get(s, "strategy", "epochs", cfg.train.epochs);
    r.get(s, "strategy", "batch_size", cfg.train.batch_size);
    r.get(s, "strategy", "lr", cfg.train.lr);
    r.get(s, "strategy", "lambda_ewc", cfg.train.lambda_ewc);
    r.get(s, "strategy", "buffer_capacity", cfg.train.buffer_capacity);
    r.get(s, "strategy", "replay_fraction", cfg.train.replay_fraction);
    r.get(s, "strategy", "hidden_sizes", cfg.train.hidden_sizes);
    r.get(s, "strategy", "fisher_samples", cfg.train.fisher_samples);
    r.get(s, "strategy", "ewc_per_batch_anchors", cfg.train.ewc_per_batch_anchors);
    if (s.is_object() && s.contains("name")) {
      try {
        strategy_by_name(cfg.strategy_name);
      } catch (const std::invalid_argument& e) {
        errors.push_back(std::string("strategy: ") + e.what());
      }
    }
    try {
      cfg.train.validate();
    } catch (const std::invalid_argument& e) {
      errors.push_back(std::string("strategy: ") + e.what());
    }
  } else {
    errors.push_back("config: missing required section 'strategy'");
  }

  r.get(j, "config", "seeds", cfg.seeds, true);
  r.require(!j.contains("seeds") || !cfg.seeds.empty(), "config: 'seeds' must list at least one seed");
  r.get(j, "config", "output_dir", cfg.output_dir);
  r.get(j, "config", "mblog_every", cfg.mblog_every);
  r.require(cfg.mblog_every >= 1, "config: mblog_every must be >= 1");

  if (j.contains("budgets")) {
    const auto& b = j["budgets"];
    r.reject_unknown(b, "budgets",
                     {"max_ops", "max_mem_bits", "max_stored_examples", "relax_memory",
                      "relax_compute", "strict"});
    long long v = 0;
    if (b.is_object() && b.contains("max_ops")) {
      r.get(b, "budgets", "max_ops", v);
      cfg.budgets.max_ops = v;
    }
    if (b.is_object() && b.contains("max_mem_bits")) {
      r.get(b, "budgets", "max_mem_bits", v);
      cfg.budgets.max_mem_bits = v;
    }
    if (b.is_object() && b.contains("max_stored_examples")) {
      r.get(b, "budgets", "max_stored_examples", v);
      cfg.budgets.max_stored_examples = v;
    }
    r.get(b, "budgets", "relax_memory", cfg.budgets.relax_memory);
    r.get(b, "budgets", "relax_compute", cfg.budgets.relax_compute);
    r.get(b, "budgets", "strict", cfg.strict_budgets);
  }

  if (j.contains("metrics")) {
    const auto& m = j["metrics"];
    r.reject_unknown(m, "metrics", {"beta", "epsilon", "weights", "reference"});
    if (m.is_object() && m.contains("beta")) {
      int beta = 0;
      r.get(m, "metrics", "beta", beta);
      cfg.beta = beta;
    }
    if (m.is_object() && m.contains("epsilon")) {
      double epsilon = 0.0;
      r.get(m, "metrics", "epsilon", epsilon);
      cfg.epsilon = epsilon;
    }
    if (m.is_object() && m.contains("weights")) {
      std::map<std::string, double> weights;
      r.get(m, "metrics", "weights", weights);
      if (!weights.empty()) {
        cfg.weights = weights;
        double total = 0.0;
        for (const auto& [name, w] : weights) total += w;
        r.require(std::abs(total - 1.0) <= 1e-9, "metrics: weights must sum to 1");
      }
    }
    r.get(m, "metrics", "reference", cfg.reference);
  }

  // the offline baseline stores every example seen; it only runs under the
  // memory relaxation
  if (cfg.reference && !cfg.budgets.relax_memory) {
    errors.push_back(
        "metrics: 'reference: true' (Omega/rho) retrains on all stored data, which needs the "
        "memory relaxation -- set budgets.relax_memory to true");
  }
  if (cfg.strategy_name == "cumulative" && !cfg.budgets.relax_memory) {
    errors.push_back("strategy: the cumulative baseline needs budgets.relax_memory");
  }

  if (!errors.empty()) throw ConfigError(std::move(errors));
  cfg.train.allow_memory_relaxation = cfg.budgets.relax_memory;
  return cfg;
}

}  // namespace cleval
