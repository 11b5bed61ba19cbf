#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cleval/cleval.hpp>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

using namespace cleval;
namespace fs = std::filesystem;

namespace {

const char* kMinimalConfig = R"({
  "dataset": {"kind": "blobs", "class_count": 6, "feature_dim": 6, "per_class": 16, "spread": 0.8},
  "scenario": {"kind": "split", "classes_per_task": 2},
  "strategy": {"name": "naive", "epochs": 3, "batch_size": 8, "lr": 0.08, "hidden_sizes": [10]},
  "seeds": [1]
})";

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string strip_timestamps(std::string text) {
  return std::regex_replace(
      text, std::regex(R"("timestamp": "[^"]*")"), "\"timestamp\": \"\"");
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "cleval_report_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunRecord small_run(std::uint64_t seed = 3, const std::string& strategy = "rehearsal") {
  const auto ds = gen_blobs(6, 6, 16, 0.8, seed);
  const auto sc = make_split(ds, 2, seed);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.lr = 0.08;
  cfg.seed = seed;
  cfg.hidden_sizes = {10};
  cfg.buffer_capacity = 24;
  auto record = run_protocol(sc, strategy_by_name(strategy), cfg, Budgets{});
  record.strategy = strategy;
  record.seed = seed;
  record.timestamp = "2026-01-01T00:00:00Z";
  return record;
}

}  // namespace

TEST_CASE("parse_config: minimal config parses with defaults") {
  const auto cfg = parse_config(kMinimalConfig);
  CHECK(cfg.dataset.kind == "blobs");
  CHECK(cfg.scenario.kind == "split");
  CHECK(cfg.strategy_name == "naive");
  CHECK(cfg.seeds == std::vector<std::uint64_t>{1});
  CHECK(cfg.train.epochs == 3);
  CHECK(cfg.weights.size() == 7);
  CHECK_FALSE(cfg.reference);
}

TEST_CASE("parse_config: rejects unknown keys, bad strategies, bad weights") {
  CHECK_THROWS_WITH_AS(parse_config("{not json"), doctest::Contains("syntax"), ConfigError);

  try {
    parse_config(R"({"dataset": {"kind": "blobs", "typo_key": 1},
                     "scenario": {"kind": "split"},
                     "strategy": {"name": "gem"},
                     "seeds": []})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("unknown key 'typo_key'") != std::string::npos);
    CHECK(msg.find("unknown strategy 'gem'") != std::string::npos);
    CHECK(msg.find("at least one seed") != std::string::npos);
  }

  const std::string bad_weights = R"({
    "dataset": {"kind": "blobs"}, "scenario": {"kind": "split"},
    "strategy": {"name": "naive"}, "seeds": [1],
    "metrics": {"weights": {"A": 0.9, "REM": 0.2}}
  })";
  CHECK_THROWS_WITH_AS(parse_config(bad_weights), doctest::Contains("sum to 1"), ConfigError);

  // omega needs the offline baseline, which needs the memory relaxation
  const std::string omega_no_relax = R"({
    "dataset": {"kind": "blobs"}, "scenario": {"kind": "split"},
    "strategy": {"name": "naive"}, "seeds": [1],
    "metrics": {"reference": true}
  })";
  CHECK_THROWS_WITH_AS(parse_config(omega_no_relax), doctest::Contains("memory relaxation"),
                       ConfigError);

  const std::string missing = R"({"strategy": {"name": "naive"}, "seeds": [1]})";
  CHECK_THROWS_WITH_AS(parse_config(missing), doctest::Contains("missing required section"),
                       ConfigError);
}

TEST_CASE("run record JSON round-trip is field-exact") {
  const auto record = small_run();
  const auto j = to_json(record);
  const auto back = run_record_from_json(j);

  CHECK(back.R.entries == record.R.entries);
  CHECK(back.mblog.batch_counts == record.mblog.batch_counts);
  CHECK(back.mblog.diag_curves == record.mblog.diag_curves);
  CHECK(back.mblog.rows == record.mblog.rows);
  CHECK(back.rand_accuracy == record.rand_accuracy);
  CHECK(back.seed == record.seed);
  CHECK(back.strategy == record.strategy);
  CHECK(back.timestamp == record.timestamp);
  CHECK(back.scenario.task_labels == record.scenario.task_labels);
  CHECK(back.scenario.params == record.scenario.params);
  CHECK(back.config.epochs == record.config.epochs);
  CHECK(back.config.seed == record.config.seed);
  CHECK(back.constraint_flags.constraint1 == record.constraint_flags.constraint1);
  CHECK(back.desiderata.storage_free == record.desiderata.storage_free);
  REQUIRE(back.resources.tasks.size() == record.resources.tasks.size());
  for (std::size_t i = 0; i < back.resources.tasks.size(); ++i) {
    CHECK(back.resources.tasks[i].ops == record.resources.tasks[i].ops);
    CHECK(back.resources.tasks[i].mem_raw_bits == record.resources.tasks[i].mem_raw_bits);
  }
  // serialization loses no metric-relevant precision
  const auto before = compute_report(record);
  const auto after = compute_report(back);
  CHECK(before.A == after.A);
  CHECK(before.BWT == after.BWT);
  CHECK(before.CE == after.CE);
}

TEST_CASE("csv matrix: 6 decimals, LF endings, round-trip within 1e-6") {
  const auto record = small_run();
  const auto csv = matrix_to_csv(record.R);
  // 3 lines x 3 fields, LF endings only
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(csv.find("\r") == std::string::npos);
  std::istringstream lines(csv);
  std::string line;
  while (std::getline(lines, line)) {
    CHECK(std::count(line.begin(), line.end(), ',') == 2);
    CHECK(std::regex_match(line, std::regex(R"(\d+\.\d{6},\d+\.\d{6},\d+\.\d{6})")));
  }
  const auto back = matrix_from_csv(csv);
  REQUIRE(back.n == record.R.n);
  for (int i = 0; i < back.n; ++i) {
    for (int j = 0; j < back.n; ++j) {
      CHECK(std::abs(back.at(i, j) - record.R.at(i, j)) <= 1e-6);
    }
  }
  // metric recomputation from the persisted matrix agrees to 1e-6
  CHECK(accuracy_A(back) == doctest::Approx(accuracy_A(record.R)).epsilon(1e-6));
  CHECK(bwt(back) == doctest::Approx(bwt(record.R)).epsilon(1e-6));

  CHECK_THROWS_AS(matrix_from_csv("0.5,0.5\n0.5\n"), std::runtime_error);
}

TEST_CASE("run_experiment: persists records, reruns are byte-identical modulo timestamp") {
  auto cfg = parse_config(kMinimalConfig);
  cfg.seeds = {4, 9};

  const auto dir_a = fresh_dir("run_a");
  cfg.output_dir = dir_a.string();
  const auto outcome_a = run_experiment(cfg);
  CHECK(outcome_a.runs.size() == 2);
  CHECK(outcome_a.reports.size() == 2);
  CHECK(fs::exists(dir_a / "run_seed4.json"));
  CHECK(fs::exists(dir_a / "run_seed4_R.csv"));
  CHECK(fs::exists(dir_a / "run_seed9.json"));
  CHECK(fs::exists(dir_a / "report.md"));
  CHECK(fs::exists(dir_a / "aggregate.csv"));

  const auto dir_b = fresh_dir("run_b");
  cfg.output_dir = dir_b.string();
  run_experiment(cfg);
  for (const char* name : {"run_seed4.json", "run_seed9.json"}) {
    CHECK(strip_timestamps(slurp(dir_a / name)) == strip_timestamps(slurp(dir_b / name)));
  }
  CHECK(slurp(dir_a / "run_seed4_R.csv") == slurp(dir_b / "run_seed4_R.csv"));
  CHECK(slurp(dir_a / "aggregate.csv") == slurp(dir_b / "aggregate.csv"));

  // stored record reloads into an equal record
  const auto loaded = load_record(dir_a / "run_seed4.json");
  CHECK(loaded.R.entries == outcome_a.runs[0].R.entries);
  CHECK(loaded.seed == 4);

  // aggregate of identical runs has zero sigma
  auto cfg_same = cfg;
  cfg_same.seeds = {4};
  const auto dir_c = fresh_dir("run_c");
  cfg_same.output_dir = dir_c.string();
  const auto once = run_experiment(cfg_same);
  for (const auto& [name, sigma] : once.stddev) CHECK(sigma == 0.0);
}

TEST_CASE("run_experiment: cumulative reference enables Omega and rho") {
  auto cfg = parse_config(kMinimalConfig);
  cfg.reference = true;
  cfg.budgets.relax_memory = true;
  cfg.train.allow_memory_relaxation = true;
  cfg.seeds = {11};
  const auto dir = fresh_dir("run_ref");
  cfg.output_dir = dir.string();
  const auto outcome = run_experiment(cfg);
  REQUIRE(outcome.references.size() == 1);
  REQUIRE(outcome.reports.size() == 1);
  CHECK(outcome.reports[0].Omega.has_value());
  CHECK(outcome.reports[0].rho.has_value());
  CHECK(fs::exists(dir / "ref_seed11.json"));

  // the reference evaluated against itself: Omega exactly 1
  const auto ref = load_record(dir / "ref_seed11.json");
  CHECK(omega(ref.R, ref.R.diagonal()) == 1.0);
}

TEST_CASE("run_experiment: an aborted run flushes its partial record before rethrowing") {
  auto cfg = parse_config(kMinimalConfig);
  cfg.strict_budgets = true;
  cfg.budgets.max_ops = 1;  // below any epoch's cost: the first task trips it
  const auto dir = fresh_dir("run_abort");
  cfg.output_dir = dir.string();
  CHECK_THROWS_AS(run_experiment(cfg), ProtocolAborted);
  const auto partial = load_record(dir / "run_seed1_partial.json");
  CHECK(partial.R.entries.size() == 1);
  CHECK(partial.constraint_flags.constraint2[0]);
}

TEST_CASE("emit_report mentions violations and aggregates") {
  auto record = small_run(5, "naive");
  record.constraint_flags.constraint1 = {false, true, false};
  record.constraint_flags.constraint2 = {false, false, false};
  ExperimentOutcome outcome;
  outcome.runs = {record};
  outcome.reports = {compute_report(record)};
  aggregate_reports(outcome);
  const auto md = emit_report(outcome.runs, outcome.reports, &outcome);
  CHECK(md.find("Constraint violations") != std::string::npos);
  CHECK(md.find("bounded-storage violated") != std::string::npos);
  CHECK(md.find("CL_score") != std::string::npos);
  CHECK(md.find("| A |") != std::string::npos);
}

TEST_CASE("cli: validate, run, metrics") {
  const auto dir = fresh_dir("cli");
  const auto config_path = dir / "config.json";
  {
    std::ofstream out(config_path);
    out << kMinimalConfig;
  }
  const std::string binary = std::string(CLEVAL_CLI_PATH);

  auto shell = [](const std::string& cmd) { return std::system(cmd.c_str()); };
  CHECK(shell(binary + " validate " + config_path.string() + " > /dev/null") == 0);
  CHECK(shell(binary + " run " + config_path.string() + " --out " + (dir / "out").string() +
              " --quiet") == 0);
  CHECK(fs::exists(dir / "out" / "run_seed1.json"));
  CHECK(shell(binary + " metrics " + (dir / "out" / "run_seed1.json").string() + " > " +
              (dir / "metrics.txt").string()) == 0);
  CHECK(slurp(dir / "metrics.txt").find("| A |") != std::string::npos);

  // bad config: nonzero exit
  const auto bad_path = dir / "bad.json";
  {
    std::ofstream out(bad_path);
    out << R"({"dataset": {"kind": "blobs"}, "scenario": {"kind": "split"},
               "strategy": {"name": "gem"}, "seeds": [1]})";
  }
  CHECK(shell(binary + " validate " + bad_path.string() + " 2> /dev/null") != 0);
}
