// cleval: configuration-driven continual-learning evaluation runs.
//
//   cleval run <config.json> [--out DIR] [--seed-override S...] [--quiet]
//   cleval metrics <record.json>... [--out DIR] [--beta B] [--epsilon E]
//   cleval validate <config.json>

#include <CLI11.hpp>

#include <cleval/cleval.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int cmd_run(const std::string& config_path, const std::string& out_override,
            const std::vector<std::uint64_t>& seed_override, bool quiet) {
  cleval::ExperimentConfig cfg;
  try {
    cfg = cleval::parse_config(slurp(config_path));
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  if (!out_override.empty()) cfg.output_dir = out_override;
  if (!seed_override.empty()) cfg.seeds = seed_override;
  try {
    const auto outcome = cleval::run_experiment(cfg, quiet);
    if (!quiet) {
      std::cout << cleval::emit_report(outcome.runs, outcome.reports, &outcome);
    }
    std::cout << "wrote " << outcome.runs.size() << " run record(s) to " << cfg.output_dir
              << "\n";
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int cmd_metrics(const std::vector<std::string>& record_paths, const std::string& out_dir,
                int beta, double epsilon) {
  std::vector<cleval::RunRecord> mains;
  std::vector<cleval::RunRecord> refs;
  try {
    for (const auto& path : record_paths) {
      auto record = cleval::load_record(path);
      (record.strategy == "cumulative" ? refs : mains).push_back(std::move(record));
    }
  } catch (const std::exception& e) {
    std::cerr << "metrics failed: " << e.what() << "\n";
    return 2;
  }
  if (mains.empty()) mains.swap(refs);  // a pure-cumulative set is reported directly

  cleval::MetricOptions options;
  if (beta >= 0) options.beta = beta;
  if (epsilon > 0) options.epsilon = epsilon;

  cleval::ExperimentOutcome outcome;
  try {
    for (const auto& record : mains) {
      const cleval::RunRecord* reference = nullptr;
      for (const auto& ref : refs) {
        if (ref.seed == record.seed && ref.scenario.n_tasks == record.scenario.n_tasks) {
          reference = &ref;
          break;
        }
      }
      outcome.reports.push_back(cleval::compute_report(record, options, reference));
      outcome.runs.push_back(record);
    }
    cleval::aggregate_reports(outcome);
  } catch (const std::exception& e) {
    std::cerr << "metrics failed: " << e.what() << "\n";
    return 1;
  }

  const std::string md = cleval::emit_report(outcome.runs, outcome.reports, &outcome);
  std::cout << md;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream out(std::filesystem::path(out_dir) / "report.md",
                      std::ios::trunc | std::ios::binary);
    out << md;
  }
  return 0;
}

int cmd_validate(const std::string& config_path) {
  try {
    cleval::parse_config(slurp(config_path));
  } catch (const cleval::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "validate failed: " << e.what() << "\n";
    return 2;
  }
  std::cout << "config ok\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continual-learning evaluation runner"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::vector<std::uint64_t> seed_override;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "execute an experiment config");
  run->add_option("config", config_path, "config JSON file")->required();
  run->add_option("--out", out_dir, "output directory (overrides the config)");
  run->add_option("--seed-override", seed_override, "replace the config's seed list");
  run->add_flag("--quiet", quiet, "suppress the report on stdout");

  std::vector<std::string> record_paths;
  int beta = -1;
  double epsilon = -1.0;
  auto* metrics = app.add_subcommand("metrics", "recompute metrics from stored run records");
  metrics->add_option("records", record_paths, "run record JSON files")->required();
  metrics->add_option("--out", out_dir, "also write report.md to this directory");
  metrics->add_option("--beta", beta, "learning-curve horizon");
  metrics->add_option("--epsilon", epsilon, "computational-efficiency scale");

  auto* validate = app.add_subcommand("validate", "check a config without running it");
  validate->add_option("config", config_path, "config JSON file")->required();

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return cmd_run(config_path, out_dir, seed_override, quiet);
  if (metrics->parsed()) return cmd_metrics(record_paths, out_dir, beta, epsilon);
  return cmd_validate(config_path);
}
