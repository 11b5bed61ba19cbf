#pragma once

// Protocol execution: stream the scenario's batches through a strategy,
// fill the train-test accuracy matrix and the mini-batch log, meter memory
// and multiply-adds, and monitor the bounded-memory / bounded-compute
// constraints and the desiderata flags.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "learner.hpp"
#include "scenario.hpp"
#include "strategy.hpp"

namespace cleval {

// R[i][j] = accuracy on test set j after training through batch i
// (rows = training stage, columns = test set; both 0-based in code).
struct AccuracyMatrix {
  int n = 0;
  std::vector<std::vector<double>> entries;

  double at(int i, int j) const { return entries[i][j]; }
  std::vector<double> diagonal() const {
    std::vector<double> d(n);
    for (int i = 0; i < n; ++i) d[i] = entries[i][i];
    return d;
  }
};

// a[i][k][j]: accuracy on test set j after the k-th mini-batch of task i.
// Diagonal entries a[i][k][i] are dense over k = 0..B_i (k = 0 is the 0-shot
// evaluation before training); full rows are kept at k = 0, every
// `mblog_every`-th mini-batch, and the final mini-batch.
struct MiniBatchLog {
  std::vector<int> batch_counts;                                       // B_i
  std::vector<std::vector<double>> diag_curves;                        // [i][k]
  std::vector<std::vector<std::pair<int, std::vector<double>>>> rows;  // [i] -> (k, row)

  const std::vector<double>* row_at(int task, int k) const {
    for (const auto& [kk, row] : rows[task]) {
      if (kk == k) return &row;
    }
    return nullptr;
  }
  const std::vector<double>& final_row(int task) const {
    const auto* row = row_at(task, batch_counts[task]);
    if (!row) throw std::logic_error("minibatch log: missing final row");
    return *row;
  }
};

struct TaskResources {
  long long mem_theta_bits = 0;    // Mem(theta_i)
  long long mem_raw_bits = 0;      // stored raw examples, end of task i
  long long mem_aux_bits = 0;      // anchor tensors, end of task i
  long long raw_example_count = 0;
  long long ops = 0;               // Ops(Tr_i): mul-adds consumed by the training call
  long long ops_unit = 0;          // Ops↑↓(Tr_i): one forward+backward over Tr_i
  long long train_size = 0;
};

struct ResourceLog {
  std::vector<TaskResources> tasks;
  long long mem_dataset_bits = 0;  // Mem(D): all train examples of the scenario
};

struct Budgets {
  std::optional<long long> max_ops;
  std::optional<long long> max_mem_bits;
  std::optional<long long> max_stored_examples;
  bool relax_memory = false;   // removes the memory bounds
  bool relax_compute = false;  // removes the ops bound
};

struct ConstraintFlags {
  std::vector<bool> constraint1;  // per task: example storage exceeded its bound
  std::vector<bool> constraint2;  // per task: ops or memory exceeded the step budget

  bool any1() const { return std::any_of(constraint1.begin(), constraint1.end(), [](bool b) { return b; }); }
  bool any2() const { return std::any_of(constraint2.begin(), constraint2.end(), [](bool b) { return b; }); }
};

struct DesiderataFlags {
  bool storage_free = false;        // no raw examples ever stored
  bool online = false;              // every training batch had exactly one example
  bool task_indicator_free = false; // no labels during training nor at test time
};

// Serialization-friendly description of the task stream.
struct ScenarioSummary {
  std::string constructor;
  std::string kind;
  std::string update_type;
  std::string label_regime;
  bool test_time_labels = false;
  int n_tasks = 0;
  int global_class_count = 0;
  int feature_dim = 0;
  std::vector<std::optional<int>> task_labels;
  std::vector<long long> train_sizes;
  std::vector<long long> test_sizes;
  std::map<std::string, double> params;
};

inline ScenarioSummary summarize_scenario(const Scenario& sc) {
  ScenarioSummary s;
  s.constructor = sc.constructor;
  s.kind = to_string(sc.kind);
  s.update_type = to_string(sc.update_type);
  s.label_regime = to_string(sc.label_regime);
  s.test_time_labels = sc.test_time_labels;
  s.n_tasks = static_cast<int>(sc.task_count());
  s.global_class_count = sc.global_class_count;
  s.feature_dim = sc.batches.empty() ? 0 : sc.batches.front().train.feature_dim;
  for (const auto& b : sc.batches) {
    s.task_labels.push_back(b.task_label);
    s.train_sizes.push_back(static_cast<long long>(b.train.size()));
    s.test_sizes.push_back(static_cast<long long>(b.test.size()));
  }
  s.params = sc.params;
  return s;
}

struct RunRecord {
  AccuracyMatrix R;
  MiniBatchLog mblog;
  ResourceLog resources;
  ScenarioSummary scenario;
  std::string strategy;
  TrainConfig config;
  std::uint64_t seed = 0;
  std::vector<double> rand_accuracy;  // stratified random-classifier accuracy per test set
  ConstraintFlags constraint_flags;
  DesiderataFlags desiderata;
  std::string timestamp;
};

using EvalFn = std::function<double(const Hypothesis&, const Dataset&, const std::vector<int>*)>;

struct RunOptions {
  int mblog_every = 1;          // keep every k-th full mini-batch row
  bool strict_budgets = false;  // abort the run on a constraint violation
  EvalFn evaluator;             // injectable for tests; defaults to evaluate_accuracy
};

// Thrown when a run aborts; carries everything recorded so far.
struct ProtocolAborted : std::runtime_error {
  ProtocolAborted(std::string message, RunRecord partial_record)
      : std::runtime_error(std::move(message)), partial(std::move(partial_record)) {}
  RunRecord partial;
};

// Expected accuracy of label-frequency-matched random guessing: sum of
// squared class frequencies.
inline double random_stratified_accuracy(const Dataset& test) {
  if (test.empty()) throw std::invalid_argument("random_stratified_accuracy: empty test set");
  std::map<int, long long> counts;
  for (const auto& ex : test.examples) counts[ex.label]++;
  double acc = 0.0;
  for (const auto& [label, n] : counts) {
    const double p = static_cast<double>(n) / static_cast<double>(test.size());
    acc += p * p;
  }
  return acc;
}

inline ConstraintFlags check_constraints(const RunRecord& record, const Budgets& budgets) {
  ConstraintFlags flags;
  const auto& tasks = record.resources.tasks;
  const long long example_budget = budgets.max_stored_examples.value_or(
      static_cast<long long>(record.config.buffer_capacity));
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const bool c1 = !budgets.relax_memory && tasks[i].raw_example_count > example_budget;
    flags.constraint1.push_back(c1);

    bool c2 = false;
    if (!budgets.relax_compute && budgets.max_ops && tasks[i].ops > *budgets.max_ops) c2 = true;
    if (!budgets.relax_memory && budgets.max_mem_bits) {
      // bound applies to the state entering step i: h_{i-1} and M_{i-1}
      const long long mem_before =
          i == 0 ? tasks[0].mem_theta_bits
                 : tasks[i - 1].mem_theta_bits + tasks[i - 1].mem_raw_bits +
                       tasks[i - 1].mem_aux_bits;
      if (mem_before > *budgets.max_mem_bits) c2 = true;
    }
    flags.constraint2.push_back(c2);
  }
  return flags;
}

inline DesiderataFlags desiderata_report(const RunRecord& record) {
  DesiderataFlags flags;
  flags.storage_free = true;
  for (const auto& t : record.resources.tasks) {
    if (t.mem_raw_bits > 0) flags.storage_free = false;
  }
  flags.online = !record.scenario.train_sizes.empty();
  for (long long n : record.scenario.train_sizes) {
    if (n != 1) flags.online = false;
  }
  flags.task_indicator_free =
      record.scenario.label_regime == "none" && !record.scenario.test_time_labels;
  return flags;
}

namespace detail {

inline std::vector<int> test_class_list(const Dataset& test) {
  std::set<int> s;
  for (const auto& ex : test.examples) s.insert(ex.label);
  return {s.begin(), s.end()};
}

}  // namespace detail

// Runs the full protocol. After every batch the model is evaluated on every
// test set, future ones included; the strategy itself never receives test
// data (the mini-batch hook closes over it on the harness side).
inline RunRecord run_protocol(const Scenario& scenario, const StrategyFn& strategy,
                              const TrainConfig& cfg, const Budgets& budgets,
                              const RunOptions& options = {}) {
  if (scenario.batches.empty()) throw std::invalid_argument("run_protocol: empty scenario");
  cfg.validate();
  if (options.mblog_every < 1) throw std::invalid_argument("run_protocol: mblog_every must be >= 1");
  const int n = static_cast<int>(scenario.task_count());

  EvalFn eval = options.evaluator;
  if (!eval) {
    eval = [](const Hypothesis& h, const Dataset& test, const std::vector<int>* allowed) {
      return evaluate_accuracy(h, test, allowed);
    };
  }

  // task-conditioned evaluation masks, used only under permanent labels
  std::vector<std::vector<int>> masks;
  if (scenario.test_time_labels) {
    for (const auto& b : scenario.batches) masks.push_back(detail::test_class_list(b.test));
  }
  auto eval_on = [&](const Hypothesis& h, int j) {
    return eval(h, scenario.batches[j].test, scenario.test_time_labels ? &masks[j] : nullptr);
  };
  auto eval_row = [&](const Hypothesis& h) {
    std::vector<double> row(n);
    for (int j = 0; j < n; ++j) row[j] = eval_on(h, j);
    return row;
  };

  RunRecord record;
  record.scenario = summarize_scenario(scenario);
  record.strategy = "custom";
  record.config = cfg;
  record.seed = cfg.seed;
  record.R.n = n;
  record.mblog.batch_counts.assign(n, 0);
  record.mblog.diag_curves.resize(n);
  record.mblog.rows.resize(n);
  record.resources.tasks.reserve(n);
  for (const auto& b : scenario.batches) {
    record.resources.mem_dataset_bits +=
        static_cast<long long>(b.train.size()) * (32LL * b.train.feature_dim + 32LL);
    record.rand_accuracy.push_back(random_stratified_accuracy(b.test));
  }

  std::vector<int> arch = {scenario.batches.front().train.feature_dim};
  arch.insert(arch.end(), cfg.hidden_sizes.begin(), cfg.hidden_sizes.end());
  arch.push_back(scenario.global_class_count);
  Hypothesis h = init_hypothesis(arch, cfg.seed);
  ExternalMemory mem;
  mem.capacity = cfg.buffer_capacity;
  OpsCounter ops;

  auto abort_run = [&](const std::string& why) {
    record.constraint_flags = check_constraints(record, budgets);
    record.desiderata = desiderata_report(record);
    throw ProtocolAborted("run_protocol: " + why, record);
  };

  for (int i = 0; i < n; ++i) {
    const TaskBatch& batch = scenario.batches[i];

    // 0-shot row before the strategy touches the batch
    auto zero_shot = eval_row(h);
    record.mblog.diag_curves[i].push_back(zero_shot[i]);
    record.mblog.rows[i].push_back({0, std::move(zero_shot)});

    const long long ops_before = ops.total();
    StepContext ctx;
    ctx.step_index = i + 1;
    ctx.ops = &ops;
    ctx.on_minibatch = [&](int k, const Hypothesis& current) {
      record.mblog.batch_counts[i] = k;
      record.mblog.diag_curves[i].push_back(eval_on(current, i));
      if (k % options.mblog_every == 0) {
        record.mblog.rows[i].push_back({k, eval_row(current)});
      }
    };

    StrategyResult result;
    try {
      result = strategy(h, batch.train, std::move(mem), batch.task_label, cfg, ctx);
    } catch (const std::exception& e) {
      abort_run(std::string("strategy failed on batch ") + std::to_string(i + 1) + ": " +
                e.what());
    }
    h = std::move(result.h);
    mem = std::move(result.mem);

    record.R.entries.push_back(eval_row(h));

    // the final mini-batch row always lands in the log (it equals row i of R)
    const int b_final = record.mblog.batch_counts[i];
    auto& rows = record.mblog.rows[i];
    if (!rows.empty() && rows.back().first == b_final && b_final != 0) {
      rows.back().second = record.R.entries.back();
    } else if (b_final != 0) {
      rows.push_back({b_final, record.R.entries.back()});
    }

    TaskResources res;
    res.mem_theta_bits = mem_of(h);
    res.mem_raw_bits = mem.raw_bits(batch.train.feature_dim);
    res.mem_aux_bits = mem.aux_bits();
    res.raw_example_count = static_cast<long long>(mem.stored_examples.size());
    res.ops = ops.total() - ops_before;
    res.ops_unit = 3 * h.madds_per_sample() * static_cast<long long>(batch.train.size());
    res.train_size = static_cast<long long>(batch.train.size());
    record.resources.tasks.push_back(res);

    if (options.strict_budgets) {
      const auto flags = check_constraints(record, budgets);
      if (flags.constraint1.back() || flags.constraint2.back()) {
        abort_run("budget violated at batch " + std::to_string(i + 1));
      }
    }
  }

  record.constraint_flags = check_constraints(record, budgets);
  record.desiderata = desiderata_report(record);
  return record;
}

}  // namespace cleval
