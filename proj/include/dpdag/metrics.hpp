#pragma once

// Structure metrics over the off-diagonal pairs of an n×n score matrix,
// mechanism MSE, perturbed-graph confidence and a sampling-time harness.

#include <cstdint>
#include <string>
#include <vector>

#include "dpdag/dp_dag.hpp"
#include "dpdag/graph.hpp"
#include "dpdag/tensor.hpp"
#include "json.hpp"

namespace dpdag {

/// Area under the ROC curve: trapezoids over the full threshold sweep, with
/// equal scores grouped into one step. Throws MetricUndefinedError unless
/// both classes occur.
double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Area under the precision-recall curve as the step integral
/// sum_k (R_k - R_{k-1}) * P_k over distinct thresholds.
double auc_pr(const std::vector<double>& scores, const std::vector<int>& labels);

struct PairUniverse {
  std::vector<double> scores;
  std::vector<int> labels;
};

/// Ordered pairs (i, j), i != j: score S_ij, label A_ij.
PairUniverse directed_pairs(const Tensor& scores, const AdjacencyMatrix& truth);
/// Unordered pairs i < j: score S_ij + S_ji, label A_ij or A_ji. `scores` is
/// the directed score matrix.
PairUniverse undirected_pairs(const Tensor& scores, const AdjacencyMatrix& truth);

struct StructureAucs {
  double dir_auc_pr = 0.0;
  double dir_auc_roc = 0.0;
  double un_auc_pr = 0.0;
  double un_auc_roc = 0.0;
};

/// All four AUCs from a directed score matrix.
StructureAucs structure_aucs(const Tensor& directed_scores, const AdjacencyMatrix& truth);

/// Insertions + deletions + reversals; a reversed pair counts once.
std::size_t shd(const AdjacencyMatrix& pred, const AdjacencyMatrix& truth);

/// Mean squared error per entry (rows × nodes).
double mechanism_mse(const Tensor& x, const Tensor& x_hat);

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
  double median = 0.0;
};

MeanSd mean_sd(const std::vector<double>& values);

/// Moves `k_moved` random edges of `truth` to random vacant off-diagonal
/// positions and reports the edge-score mass of the perturbed graph relative
/// to the clean one.
MeanSd perturbation_confidence(const DpDagModel& model, const AdjacencyMatrix& truth, std::size_t k_moved,
                               std::size_t trials, std::uint64_t seed);
/// Same, for an explicit directed score matrix (S(i, j) scores the edge j -> i).
MeanSd perturbation_confidence(const Tensor& directed_scores, const AdjacencyMatrix& truth, std::size_t k_moved,
                               std::size_t trials, std::uint64_t seed);

/// Wall-clock seconds per hard DAG sample (three untimed warmup draws, one thread).
MeanSd bench_sampling(const DpDagModel& model, std::size_t repetitions, std::uint64_t seed);

struct MetricsReport {
  std::string dataset;
  std::uint64_t seed = 0;
  StructureAucs aucs;
  std::vector<std::pair<double, std::size_t>> shd_at;  // (threshold, shd)
  double mse = 0.0;
  double train_seconds = 0.0;
  double sample_seconds = 0.0;
};

nlohmann::json to_json(const MetricsReport& r);
std::string csv_header(const MetricsReport& r);
std::string csv_row(const MetricsReport& r);

}  // namespace dpdag
