#pragma once

// Persistence for run records and reports: one JSON document per run
// (schema_version 1, keys sorted, stable field order) and CSV files for the
// accuracy matrices (UTF-8, LF, '.' decimal separator, 6 decimal places).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "harness.hpp"
#include "metrics.hpp"

namespace cleval {

using json = nlohmann::json;

inline json to_json(const TrainConfig& cfg) {
  return {{"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"lr", cfg.lr},
          {"lambda_ewc", cfg.lambda_ewc},
          {"buffer_capacity", cfg.buffer_capacity},
          {"replay_fraction", cfg.replay_fraction},
          {"seed", cfg.seed},
          {"hidden_sizes", cfg.hidden_sizes},
          {"fisher_samples", cfg.fisher_samples},
          {"allow_memory_relaxation", cfg.allow_memory_relaxation},
          {"ewc_per_batch_anchors", cfg.ewc_per_batch_anchors}};
}

inline TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  cfg.epochs = j.at("epochs").get<int>();
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.lr = j.at("lr").get<double>();
  cfg.lambda_ewc = j.at("lambda_ewc").get<double>();
  cfg.buffer_capacity = j.at("buffer_capacity").get<std::size_t>();
  cfg.replay_fraction = j.at("replay_fraction").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.hidden_sizes = j.at("hidden_sizes").get<std::vector<int>>();
  cfg.fisher_samples = j.at("fisher_samples").get<int>();
  cfg.allow_memory_relaxation = j.at("allow_memory_relaxation").get<bool>();
  cfg.ewc_per_batch_anchors = j.at("ewc_per_batch_anchors").get<bool>();
  return cfg;
}

inline json to_json(const RunRecord& record) {
  json scenario = {{"constructor", record.scenario.constructor},
                   {"kind", record.scenario.kind},
                   {"update_type", record.scenario.update_type},
                   {"label_regime", record.scenario.label_regime},
                   {"test_time_labels", record.scenario.test_time_labels},
                   {"n_tasks", record.scenario.n_tasks},
                   {"global_class_count", record.scenario.global_class_count},
                   {"feature_dim", record.scenario.feature_dim},
                   {"train_sizes", record.scenario.train_sizes},
                   {"test_sizes", record.scenario.test_sizes},
                   {"params", record.scenario.params}};
  scenario["task_labels"] = json::array();
  for (const auto& label : record.scenario.task_labels) {
    scenario["task_labels"].push_back(label ? json(*label) : json(nullptr));
  }

  json mblog = {{"batch_counts", record.mblog.batch_counts},
                {"diag_curves", record.mblog.diag_curves}};
  mblog["rows"] = json::array();
  for (const auto& task_rows : record.mblog.rows) {
    json rows = json::array();
    for (const auto& [k, row] : task_rows) {
      rows.push_back({{"k", k}, {"acc", row}});
    }
    mblog["rows"].push_back(std::move(rows));
  }

  json tasks = json::array();
  for (const auto& t : record.resources.tasks) {
    tasks.push_back({{"mem_theta_bits", t.mem_theta_bits},
                     {"mem_raw_bits", t.mem_raw_bits},
                     {"mem_aux_bits", t.mem_aux_bits},
                     {"raw_example_count", t.raw_example_count},
                     {"ops", t.ops},
                     {"ops_unit", t.ops_unit},
                     {"train_size", t.train_size}});
  }

  return {{"schema_version", 1},
          {"timestamp", record.timestamp},
          {"seed", record.seed},
          {"strategy", record.strategy},
          {"config", to_json(record.config)},
          {"scenario", scenario},
          {"accuracy_matrix", record.R.entries},
          {"rand_accuracy", record.rand_accuracy},
          {"minibatch_log", mblog},
          {"resources",
           {{"mem_dataset_bits", record.resources.mem_dataset_bits}, {"tasks", tasks}}},
          {"constraint_flags",
           {{"constraint1", record.constraint_flags.constraint1},
            {"constraint2", record.constraint_flags.constraint2}}},
          {"desiderata",
           {{"storage_free", record.desiderata.storage_free},
            {"online", record.desiderata.online},
            {"task_indicator_free", record.desiderata.task_indicator_free}}}};
}

inline RunRecord run_record_from_json(const json& j) {
  if (j.at("schema_version").get<int>() != 1) {
    throw std::runtime_error("run record: unsupported schema_version");
  }
  RunRecord record;
  record.timestamp = j.at("timestamp").get<std::string>();
  record.seed = j.at("seed").get<std::uint64_t>();
  record.strategy = j.at("strategy").get<std::string>();
  record.config = train_config_from_json(j.at("config"));

  const auto& sc = j.at("scenario");
  record.scenario.constructor = sc.at("constructor").get<std::string>();
  record.scenario.kind = sc.at("kind").get<std::string>();
  record.scenario.update_type = sc.at("update_type").get<std::string>();
  record.scenario.label_regime = sc.at("label_regime").get<std::string>();
  record.scenario.test_time_labels = sc.at("test_time_labels").get<bool>();
  record.scenario.n_tasks = sc.at("n_tasks").get<int>();
  record.scenario.global_class_count = sc.at("global_class_count").get<int>();
  record.scenario.feature_dim = sc.at("feature_dim").get<int>();
  record.scenario.train_sizes = sc.at("train_sizes").get<std::vector<long long>>();
  record.scenario.test_sizes = sc.at("test_sizes").get<std::vector<long long>>();
  record.scenario.params = sc.at("params").get<std::map<std::string, double>>();
  for (const auto& label : sc.at("task_labels")) {
    record.scenario.task_labels.push_back(
        label.is_null() ? std::optional<int>{} : std::optional<int>{label.get<int>()});
  }

  record.R.entries = j.at("accuracy_matrix").get<std::vector<std::vector<double>>>();
  record.R.n = static_cast<int>(record.R.entries.size());
  record.rand_accuracy = j.at("rand_accuracy").get<std::vector<double>>();

  const auto& mblog = j.at("minibatch_log");
  record.mblog.batch_counts = mblog.at("batch_counts").get<std::vector<int>>();
  record.mblog.diag_curves = mblog.at("diag_curves").get<std::vector<std::vector<double>>>();
  for (const auto& task_rows : mblog.at("rows")) {
    std::vector<std::pair<int, std::vector<double>>> rows;
    for (const auto& entry : task_rows) {
      rows.push_back({entry.at("k").get<int>(), entry.at("acc").get<std::vector<double>>()});
    }
    record.mblog.rows.push_back(std::move(rows));
  }

  const auto& resources = j.at("resources");
  record.resources.mem_dataset_bits = resources.at("mem_dataset_bits").get<long long>();
  for (const auto& t : resources.at("tasks")) {
    TaskResources task;
    task.mem_theta_bits = t.at("mem_theta_bits").get<long long>();
    task.mem_raw_bits = t.at("mem_raw_bits").get<long long>();
    task.mem_aux_bits = t.at("mem_aux_bits").get<long long>();
    task.raw_example_count = t.at("raw_example_count").get<long long>();
    task.ops = t.at("ops").get<long long>();
    task.ops_unit = t.at("ops_unit").get<long long>();
    task.train_size = t.at("train_size").get<long long>();
    record.resources.tasks.push_back(task);
  }

  const auto& flags = j.at("constraint_flags");
  record.constraint_flags.constraint1 = flags.at("constraint1").get<std::vector<bool>>();
  record.constraint_flags.constraint2 = flags.at("constraint2").get<std::vector<bool>>();
  const auto& desiderata = j.at("desiderata");
  record.desiderata.storage_free = desiderata.at("storage_free").get<bool>();
  record.desiderata.online = desiderata.at("online").get<bool>();
  record.desiderata.task_indicator_free = desiderata.at("task_indicator_free").get<bool>();
  return record;
}

inline void save_record(const RunRecord& record, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(record).dump(2) << "\n";
}

inline RunRecord load_record(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  json j;
  in >> j;
  return run_record_from_json(j);
}

// R matrix as CSV: row i = training stage, 6 decimal places.
inline std::string matrix_to_csv(const AccuracyMatrix& m) {
  std::string out;
  char buf[32];
  for (const auto& row : m.entries) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.6f", row[j]);
      out += buf;
      if (j + 1 < row.size()) out += ',';
    }
    out += '\n';
  }
  return out;
}

inline AccuracyMatrix matrix_from_csv(const std::string& text) {
  AccuracyMatrix m;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream fields(line);
    std::string field;
    while (std::getline(fields, field, ',')) row.push_back(std::stod(field));
    m.entries.push_back(std::move(row));
  }
  m.n = static_cast<int>(m.entries.size());
  for (const auto& row : m.entries) {
    if (row.size() != m.entries.size()) {
      throw std::runtime_error("matrix csv: not square");
    }
  }
  return m;
}

inline void save_matrix_csv(const AccuracyMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << matrix_to_csv(m);
}

inline AccuracyMatrix load_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return matrix_from_csv(buf.str());
}

inline json to_json(const MetricReport& report) {
  json j = {{"A", report.A},
            {"MS", report.MS},
            {"SSS", report.SSS},
            {"CE", report.CE},
            {"Z_curve", report.Z_curve},
            {"weights", report.weights},
            {"forgetting", report.forgetting}};
  auto put = [&](const char* name, const std::optional<double>& v) {
    j[name] = v ? json(*v) : json(nullptr);
  };
  put("BWT", report.BWT);
  put("REM", report.REM);
  put("BWT_plus", report.BWT_plus);
  put("FWT", report.FWT);
  put("Omega", report.Omega);
  put("rho", report.rho);
  put("LCA_beta", report.LCA_beta);
  return j;
}

}  // namespace cleval
