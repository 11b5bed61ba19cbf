#pragma once

// The full metric suite over a finished run: accuracy and transfer metrics on
// the train-test accuracy matrix R, learning-curve and forgetting measures on
// the mini-batch log, relative-performance metrics against the offline
// reference, and the resource-efficiency family with their weighted
// aggregation across runs.

#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "harness.hpp"

namespace cleval {

// A = sum over the lower triangle including the diagonal of R, divided by
// N(N+1)/2.
inline double accuracy_A(const AccuracyMatrix& R) {
  if (R.n < 1) throw std::invalid_argument("accuracy_A: empty matrix");
  double sum = 0.0;
  for (int i = 0; i < R.n; ++i) {
    for (int j = 0; j <= i; ++j) sum += R.at(i, j);
  }
  return sum / (R.n * (R.n + 1) / 2.0);
}

// BWT = mean over i > j of R[i][j] - R[j][j]; undefined for a single batch.
inline double bwt(const AccuracyMatrix& R) {
  if (R.n < 2) throw std::invalid_argument("bwt: undefined for fewer than 2 batches");
  double sum = 0.0;
  for (int i = 1; i < R.n; ++i) {
    for (int j = 0; j < i; ++j) sum += R.at(i, j) - R.at(j, j);
  }
  return sum / (R.n * (R.n - 1) / 2.0);
}

// REM = 1 - |min(BWT, 0)|, BWT+ = max(BWT, 0).
inline std::pair<double, double> rem_and_bwt_plus(double bwt_value) {
  return {1.0 - std::abs(std::min(bwt_value, 0.0)), std::max(bwt_value, 0.0)};
}

// FWT = mean of the strictly-upper-triangle entries of R.
inline double fwt(const AccuracyMatrix& R) {
  if (R.n < 2) throw std::invalid_argument("fwt: undefined for fewer than 2 batches");
  double sum = 0.0;
  for (int i = 0; i < R.n; ++i) {
    for (int j = i + 1; j < R.n; ++j) sum += R.at(i, j);
  }
  return sum / (R.n * (R.n - 1) / 2.0);
}

// Omega = (1/N) sum_i R[i][i] / R_cum[i][i]; may exceed 1 when the continual
// learner beats the offline reference.
inline double omega(const AccuracyMatrix& R, const std::vector<double>& cumulative_diag) {
  if (R.n < 1) throw std::invalid_argument("omega: empty matrix");
  if (static_cast<int>(cumulative_diag.size()) != R.n) {
    throw std::invalid_argument("omega: reference diagonal has the wrong length");
  }
  double sum = 0.0;
  for (int i = 0; i < R.n; ++i) {
    if (cumulative_diag[i] <= 0.0) {
      throw std::domain_error("omega: reference accuracy for task " + std::to_string(i + 1) +
                              " is zero; the ratio is undefined");
    }
    sum += R.at(i, i) / cumulative_diag[i];
  }
  return sum / R.n;
}

// rho = (1/N) sum_{i,j over the full matrix} ((R[i][j] - R_rand[j]) /
// (R_cum[i][j] - R_rand[j]) - 1), exactly as printed: the prefactor is 1/N
// although the double sum has N^2 terms, so the scale grows with N.
inline double forgetting_ratio(const AccuracyMatrix& R, const AccuracyMatrix& R_cum,
                               const std::vector<double>& rand_accuracy) {
  if (R.n < 1) throw std::invalid_argument("forgetting_ratio: empty matrix");
  if (R_cum.n != R.n || static_cast<int>(rand_accuracy.size()) != R.n) {
    throw std::invalid_argument("forgetting_ratio: mismatched inputs");
  }
  double sum = 0.0;
  for (int i = 0; i < R.n; ++i) {
    for (int j = 0; j < R.n; ++j) {
      const double denom = R_cum.at(i, j) - rand_accuracy[j];
      if (std::abs(denom) < 1e-12) {
        throw std::domain_error(
            "forgetting_ratio: reference equals the random baseline at (" +
            std::to_string(i + 1) + ", " + std::to_string(j + 1) + "); degenerate denominator");
      }
      sum += (R.at(i, j) - rand_accuracy[j]) / denom - 1.0;
    }
  }
  return sum / R.n;
}

// Z_b = (1/N) sum_i a[i][b][i]; LCA_beta = (1/(beta+1)) sum_{b=0..beta} Z_b.
inline std::pair<std::vector<double>, double> lca(const MiniBatchLog& mblog, int beta) {
  if (beta < 0) throw std::invalid_argument("lca: beta must be >= 0");
  const int n = static_cast<int>(mblog.diag_curves.size());
  if (n == 0) throw std::invalid_argument("lca: empty mini-batch log");
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(mblog.diag_curves[i].size()) < beta + 1) {
      throw std::invalid_argument("lca: task " + std::to_string(i + 1) + " logged only " +
                                  std::to_string(mblog.diag_curves[i].size()) +
                                  " mini-batch accuracies; beta is too large");
    }
  }
  std::vector<double> z(beta + 1, 0.0);
  for (int b = 0; b <= beta; ++b) {
    for (int i = 0; i < n; ++i) z[b] += mblog.diag_curves[i][b];
    z[b] /= n;
  }
  double area = 0.0;
  for (double v : z) area += v;
  return {std::move(z), area / (beta + 1)};
}

// f_j^k = max_{l < k} a[l][B_l][j] - a[k][B_k][j]; drop in accuracy on task j
// after finishing task k. Indices are 0-based here, so k >= 1 and j < k.
inline double forgetting_measure(const MiniBatchLog& mblog, int j, int k) {
  const int n = static_cast<int>(mblog.batch_counts.size());
  if (k < 1 || k >= n) {
    throw std::invalid_argument("forgetting_measure: k must name a task with predecessors");
  }
  if (j < 0 || j >= k) {
    throw std::invalid_argument("forgetting_measure: j must name a task before k");
  }
  double best_prior = -1.0;
  for (int l = 0; l < k; ++l) {
    best_prior = std::max(best_prior, mblog.final_row(l)[j]);
  }
  return best_prior - mblog.final_row(k)[j];
}

// MS = min(1, mean_i Mem(theta_1)/Mem(theta_i)).
inline double model_size_eff(const ResourceLog& resources) {
  if (resources.tasks.empty()) throw std::invalid_argument("model_size_eff: empty resource log");
  const double first = static_cast<double>(resources.tasks.front().mem_theta_bits);
  double sum = 0.0;
  for (const auto& t : resources.tasks) {
    if (t.mem_theta_bits <= 0) throw std::invalid_argument("model_size_eff: non-positive model size");
    sum += first / static_cast<double>(t.mem_theta_bits);
  }
  return std::min(1.0, sum / static_cast<double>(resources.tasks.size()));
}

// SSS = 1 - min(1, mean_i Mem(M_i)/Mem(D)), with Mem(M_i) the bits of stored
// raw samples and Mem(D) the bits of the scenario's full training stream.
inline double samples_storage_eff(const ResourceLog& resources) {
  if (resources.tasks.empty()) {
    throw std::invalid_argument("samples_storage_eff: empty resource log");
  }
  if (resources.mem_dataset_bits <= 0) {
    throw std::invalid_argument("samples_storage_eff: lifetime dataset size is zero");
  }
  double sum = 0.0;
  for (const auto& t : resources.tasks) {
    sum += static_cast<double>(t.mem_raw_bits) / static_cast<double>(resources.mem_dataset_bits);
  }
  return 1.0 - std::min(1.0, sum / static_cast<double>(resources.tasks.size()));
}

// CE = min(1, mean_i (Ops↑↓(Tr_i) * epsilon) / (1 + Ops(Tr_i))).
inline double computational_eff(const ResourceLog& resources, double epsilon) {
  if (resources.tasks.empty()) throw std::invalid_argument("computational_eff: empty resource log");
  if (epsilon <= 0.0) throw std::invalid_argument("computational_eff: epsilon must be positive");
  double sum = 0.0;
  for (const auto& t : resources.tasks) {
    sum += (static_cast<double>(t.ops_unit) * epsilon) / (1.0 + static_cast<double>(t.ops));
  }
  return std::min(1.0, sum / static_cast<double>(resources.tasks.size()));
}

namespace detail {

inline void check_weights(const std::map<std::string, double>& criteria,
                          const std::map<std::string, double>& weights) {
  double total = 0.0;
  for (const auto& [name, w] : weights) {
    if (w < 0.0 || w > 1.0) {
      throw std::invalid_argument("weights: '" + name + "' outside [0, 1]");
    }
    if (!criteria.count(name)) {
      throw std::invalid_argument("weights: no criterion named '" + name + "'");
    }
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("weights: must sum to 1 (got " + std::to_string(total) + ")");
  }
}

}  // namespace detail

// CL_score = sum_i w_i c_i over criteria already averaged across runs.
inline double cl_score(const std::map<std::string, double>& criteria,
                       const std::map<std::string, double>& weights) {
  detail::check_weights(criteria, weights);
  double score = 0.0;
  for (const auto& [name, w] : weights) {
    const double c = criteria.at(name);
    if (c < 0.0 || c > 1.0) {
      throw std::invalid_argument("cl_score: criterion '" + name + "' outside [0, 1]");
    }
    score += w * c;
  }
  return score;
}

// CL_stability = 1 - sum_i w_i sigma(c_i), sigma the population standard
// deviation of each criterion across runs.
inline double cl_stability(const std::vector<std::map<std::string, double>>& per_run_criteria,
                           const std::map<std::string, double>& weights) {
  if (per_run_criteria.empty()) throw std::invalid_argument("cl_stability: no runs");
  detail::check_weights(per_run_criteria.front(), weights);
  double penalty = 0.0;
  for (const auto& [name, w] : weights) {
    double mean = 0.0;
    for (const auto& run : per_run_criteria) {
      if (!run.count(name)) throw std::invalid_argument("cl_stability: run missing '" + name + "'");
      mean += run.at(name);
    }
    mean /= static_cast<double>(per_run_criteria.size());
    double var = 0.0;
    for (const auto& run : per_run_criteria) {
      const double d = run.at(name) - mean;
      var += d * d;
    }
    var /= static_cast<double>(per_run_criteria.size());
    penalty += w * std::sqrt(var);
  }
  return 1.0 - penalty;
}

inline std::map<std::string, double> default_score_weights() {
  const double w = 1.0 / 7.0;
  return {{"A", w},  {"REM", w}, {"BWT_plus", w}, {"FWT", w},
          {"MS", w}, {"SSS", w}, {"CE", w}};
}

// Everything computed from one run. BWT-family and FWT entries stay empty for
// single-batch runs where the paper calls them meaningless; Omega and rho are
// present only when an offline reference run is supplied.
struct MetricReport {
  double A = 0.0;
  std::optional<double> BWT, REM, BWT_plus, FWT;
  std::optional<double> Omega, rho;
  std::vector<double> Z_curve;
  std::optional<double> LCA_beta;
  std::map<std::string, std::map<std::string, double>> forgetting;  // f[k][j], 1-based names
  double MS = 0.0, SSS = 0.0, CE = 0.0;
  std::map<std::string, double> weights;

  // the criteria that feed CL_score / CL_stability
  std::map<std::string, double> criteria() const {
    std::map<std::string, double> c = {{"A", A}, {"MS", MS}, {"SSS", SSS}, {"CE", CE}};
    if (REM) c["REM"] = *REM;
    if (BWT_plus) c["BWT_plus"] = *BWT_plus;
    if (FWT) c["FWT"] = *FWT;
    return c;
  }
};

struct MetricOptions {
  std::optional<int> beta;       // defaults to the shortest task's mini-batch count
  std::optional<double> epsilon; // defaults to the configured epoch count
  std::map<std::string, double> weights = default_score_weights();
};

inline MetricReport compute_report(const RunRecord& record, const MetricOptions& options = {},
                                   const RunRecord* cumulative_reference = nullptr) {
  MetricReport report;
  report.weights = options.weights;
  report.A = accuracy_A(record.R);
  if (record.R.n >= 2) {
    const double b = bwt(record.R);
    const auto [rem, plus] = rem_and_bwt_plus(b);
    report.BWT = b;
    report.REM = rem;
    report.BWT_plus = plus;
    report.FWT = fwt(record.R);
  }

  int beta = options.beta.value_or(0);
  if (!options.beta) {
    int min_batches = record.mblog.batch_counts.empty() ? 0 : record.mblog.batch_counts.front();
    for (int b : record.mblog.batch_counts) min_batches = std::min(min_batches, b);
    beta = min_batches;
  }
  auto [z, area] = lca(record.mblog, beta);
  report.Z_curve = std::move(z);
  report.LCA_beta = area;

  for (int k = 1; k < record.R.n; ++k) {
    for (int j = 0; j < k; ++j) {
      report.forgetting["task_" + std::to_string(k + 1)]["task_" + std::to_string(j + 1)] =
          forgetting_measure(record.mblog, j, k);
    }
  }

  report.MS = model_size_eff(record.resources);
  report.SSS = samples_storage_eff(record.resources);
  report.CE = computational_eff(record.resources,
                                options.epsilon.value_or(static_cast<double>(record.config.epochs)));

  if (cumulative_reference) {
    if (cumulative_reference->R.n != record.R.n) {
      throw std::invalid_argument("compute_report: reference run has a different task count");
    }
    report.Omega = omega(record.R, cumulative_reference->R.diagonal());
    report.rho = forgetting_ratio(record.R, cumulative_reference->R, record.rand_accuracy);
  }
  return report;
}

}  // namespace cleval
