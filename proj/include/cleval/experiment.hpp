#pragma once

// Config-driven experiment execution: one protocol run per seed (plus the
// offline cumulative reference when requested), metric reports, aggregation
// across seeds, and persistent outputs (JSON records, CSV matrices, a
// markdown summary).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "harness.hpp"
#include "idx.hpp"
#include "metrics.hpp"
#include "serialize.hpp"

namespace cleval {

inline Dataset build_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  if (spec.kind == "blobs") {
    return gen_blobs(spec.class_count, spec.feature_dim, spec.per_class, spec.spread, seed);
  }
  if (spec.kind == "patterns") {
    return gen_patterns(spec.class_count, spec.image_side, spec.per_class, spec.noise_std, seed);
  }
  if (spec.kind == "idx") return load_idx(spec.images_path, spec.labels_path);
  throw std::invalid_argument("unknown dataset kind '" + spec.kind + "'");
}

inline Scenario build_scenario(const ScenarioSpec& spec, const Dataset& ds, std::uint64_t seed) {
  Scenario sc;
  if (spec.kind == "split") {
    sc = make_split(ds, spec.classes_per_task, seed, spec.test_fraction);
  } else if (spec.kind == "permuted") {
    sc = make_permuted(ds, spec.n_tasks, seed, spec.test_fraction);
  } else if (spec.kind == "rotated") {
    sc = make_rotated(ds, spec.angles, seed, spec.test_fraction);
  } else if (spec.kind == "nic") {
    sc = make_nic(ds, spec.classes_per_task, spec.revisits, seed, spec.test_fraction);
  } else {
    throw std::invalid_argument("unknown scenario kind '" + spec.kind + "'");
  }
  if (spec.label_regime == "none") {
    sc = apply_label_regime(sc, LabelRegime::none, mix_seed(seed, 7));
  } else if (spec.label_regime == "sparse") {
    sc = apply_label_regime(sc, LabelRegime::sparse, mix_seed(seed, 7), spec.keep_prob);
  }
  sc.test_time_labels = spec.test_time_labels;
  validate_scenario(sc);
  return sc;
}

struct ExperimentOutcome {
  std::vector<RunRecord> runs;
  std::vector<RunRecord> references;  // parallel to runs when present
  std::vector<MetricReport> reports;
  std::map<std::string, double> mean;
  std::map<std::string, double> stddev;  // population
  std::optional<double> score;
  std::optional<double> stability;
  std::map<std::string, double> weights;
};

namespace detail {

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

inline std::string fmt(double v, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

inline std::string fmt_opt(const std::optional<double>& v, int digits = 4) {
  return v ? fmt(*v, digits) : std::string("-");
}

}  // namespace detail

// Aggregates the per-run criteria and computes the weighted score/stability
// when every weighted criterion is available on every run.
inline void aggregate_reports(ExperimentOutcome& outcome) {
  if (outcome.reports.empty()) return;
  outcome.weights = outcome.reports.front().weights;
  std::vector<std::map<std::string, double>> per_run;
  for (const auto& report : outcome.reports) per_run.push_back(report.criteria());

  for (const auto& [name, value] : per_run.front()) {
    bool everywhere = true;
    double mean = 0.0;
    for (const auto& run : per_run) {
      if (!run.count(name)) {
        everywhere = false;
        break;
      }
      mean += run.at(name);
    }
    if (!everywhere) continue;
    mean /= static_cast<double>(per_run.size());
    double var = 0.0;
    for (const auto& run : per_run) {
      var += (run.at(name) - mean) * (run.at(name) - mean);
    }
    outcome.mean[name] = mean;
    outcome.stddev[name] = std::sqrt(var / static_cast<double>(per_run.size()));
  }

  bool scorable = true;
  for (const auto& [name, w] : outcome.weights) {
    if (!outcome.mean.count(name)) scorable = false;
  }
  if (scorable) {
    outcome.score = cl_score(outcome.mean, outcome.weights);
    outcome.stability = cl_stability(per_run, outcome.weights);
  }
}

// Markdown summary: a metrics table per run, the aggregate table with
// mean +/- population sigma, and the constraint/desiderata flags.
inline std::string emit_report(const std::vector<RunRecord>& records,
                               const std::vector<MetricReport>& reports,
                               const ExperimentOutcome* aggregate = nullptr) {
  std::string md = "# Continual-learning evaluation report\n";
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& record = records[r];
    md += "\n## Run: strategy=" + record.strategy + " seed=" + std::to_string(record.seed) +
          "\n\n";
    md += "scenario: " + record.scenario.constructor + " (" + record.scenario.kind + ", " +
          record.scenario.update_type + ", labels=" + record.scenario.label_regime + ", N=" +
          std::to_string(record.scenario.n_tasks) + ")\n\n";
    if (r < reports.size()) {
      const auto& m = reports[r];
      md += "| metric | value |\n|---|---|\n";
      md += "| A | " + detail::fmt(m.A) + " |\n";
      md += "| BWT | " + detail::fmt_opt(m.BWT) + " |\n";
      md += "| REM | " + detail::fmt_opt(m.REM) + " |\n";
      md += "| BWT+ | " + detail::fmt_opt(m.BWT_plus) + " |\n";
      md += "| FWT | " + detail::fmt_opt(m.FWT) + " |\n";
      md += "| Omega | " + detail::fmt_opt(m.Omega) + " |\n";
      md += "| rho | " + detail::fmt_opt(m.rho) + " |\n";
      md += "| LCA | " + detail::fmt_opt(m.LCA_beta) + " |\n";
      md += "| MS | " + detail::fmt(m.MS) + " |\n";
      md += "| SSS | " + detail::fmt(m.SSS) + " |\n";
      md += "| CE | " + detail::fmt(m.CE) + " |\n";
    }
    md += "\nflags: storage_free=" + std::string(record.desiderata.storage_free ? "yes" : "no") +
          ", online=" + (record.desiderata.online ? "yes" : "no") + ", task_indicator_free=" +
          (record.desiderata.task_indicator_free ? "yes" : "no") + "\n";
  }

  bool any_violation = false;
  for (const auto& record : records) {
    if (record.constraint_flags.any1() || record.constraint_flags.any2()) any_violation = true;
  }
  if (any_violation) {
    md += "\n## Constraint violations\n\n";
    for (const auto& record : records) {
      if (!record.constraint_flags.any1() && !record.constraint_flags.any2()) continue;
      md += "- strategy=" + record.strategy + " seed=" + std::to_string(record.seed) + ":";
      if (record.constraint_flags.any1()) md += " bounded-storage violated";
      if (record.constraint_flags.any2()) md += " step-budget violated";
      md += " (tasks:";
      for (std::size_t i = 0; i < record.constraint_flags.constraint1.size(); ++i) {
        if (record.constraint_flags.constraint1[i] || record.constraint_flags.constraint2[i]) {
          md += " " + std::to_string(i + 1);
        }
      }
      md += ")\n";
    }
  }

  if (aggregate && !aggregate->mean.empty()) {
    md += "\n## Aggregate over " + std::to_string(records.size()) +
          " runs (mean +/- population sigma)\n\n| criterion | mean | sigma |\n|---|---|---|\n";
    for (const auto& [name, mean] : aggregate->mean) {
      md += "| " + name + " | " + detail::fmt(mean) + " | " +
            detail::fmt(aggregate->stddev.at(name)) + " |\n";
    }
    md += "\n";
    md += "CL_score: " + detail::fmt_opt(aggregate->score) + "\n";
    md += "CL_stability: " + detail::fmt_opt(aggregate->stability) + "\n";
  }
  return md;
}

// Executes the whole experiment. Writes one JSON record and one R-matrix CSV
// per run (plus reference records), then the aggregate report. Partial
// records are flushed when a run aborts.
inline ExperimentOutcome run_experiment(const ExperimentConfig& cfg, bool quiet = true) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  ExperimentOutcome outcome;

  MetricOptions metric_options;
  metric_options.beta = cfg.beta;
  metric_options.epsilon = cfg.epsilon;
  metric_options.weights = cfg.weights;

  const auto strategy = strategy_by_name(cfg.strategy_name);
  RunOptions run_options;
  run_options.mblog_every = cfg.mblog_every;
  run_options.strict_budgets = cfg.strict_budgets;

  for (const std::uint64_t seed : cfg.seeds) {
    const auto ds = build_dataset(cfg.dataset, mix_seed(seed, 100));
    const auto scenario = build_scenario(cfg.scenario, ds, mix_seed(seed, 101));

    TrainConfig train = cfg.train;
    train.seed = mix_seed(seed, 102);

    RunRecord record;
    try {
      record = run_protocol(scenario, strategy, train, cfg.budgets, run_options);
    } catch (ProtocolAborted& aborted) {
      aborted.partial.strategy = cfg.strategy_name;
      aborted.partial.seed = seed;
      aborted.partial.timestamp = detail::utc_timestamp();
      save_record(aborted.partial,
                  fs::path(cfg.output_dir) / ("run_seed" + std::to_string(seed) + "_partial.json"));
      throw;
    }
    record.strategy = cfg.strategy_name;
    record.seed = seed;
    record.timestamp = detail::utc_timestamp();

    const RunRecord* reference = nullptr;
    if (cfg.reference) {
      TrainConfig ref_train = train;
      ref_train.allow_memory_relaxation = true;
      Budgets ref_budgets = cfg.budgets;
      ref_budgets.relax_memory = true;
      RunRecord ref = run_protocol(scenario, train_cumulative, ref_train, ref_budgets, run_options);
      ref.strategy = "cumulative";
      ref.seed = seed;
      ref.timestamp = detail::utc_timestamp();
      save_record(ref, fs::path(cfg.output_dir) / ("ref_seed" + std::to_string(seed) + ".json"));
      outcome.references.push_back(std::move(ref));
      reference = &outcome.references.back();
    }

    outcome.reports.push_back(compute_report(record, metric_options, reference));
    save_record(record, fs::path(cfg.output_dir) / ("run_seed" + std::to_string(seed) + ".json"));
    save_matrix_csv(record.R,
                    fs::path(cfg.output_dir) / ("run_seed" + std::to_string(seed) + "_R.csv"));
    outcome.runs.push_back(std::move(record));
    if (!quiet) {
      std::fprintf(stderr, "completed seed %llu\n", static_cast<unsigned long long>(seed));
    }
  }

  aggregate_reports(outcome);

  const std::string md = emit_report(outcome.runs, outcome.reports, &outcome);
  std::ofstream report(fs::path(cfg.output_dir) / "report.md", std::ios::trunc | std::ios::binary);
  report << md;

  std::ofstream agg(fs::path(cfg.output_dir) / "aggregate.csv", std::ios::trunc | std::ios::binary);
  agg << "criterion,mean,stddev\n";
  for (const auto& [name, mean] : outcome.mean) {
    char line[128];
    std::snprintf(line, sizeof(line), "%s,%.6f,%.6f\n", name.c_str(), mean,
                  outcome.stddev.at(name));
    agg << line;
  }
  return outcome;
}

}  // namespace cleval
