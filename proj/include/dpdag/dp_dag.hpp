#pragma once

// The DP-DAG model: a distribution over DAGs obtained by sampling a node
// permutation and an edge matrix, then masking the edges with the strictly
// upper-triangular mask carried through the permutation.

#include <cstdint>
#include <string>

#include "dpdag/autodiff.hpp"
#include "dpdag/graph.hpp"
#include "dpdag/gumbel.hpp"
#include "json.hpp"

namespace dpdag {

struct DpDagModel {
  EdgeParams edges;
  PermutationParams perm;

  std::size_t n() const { return edges.n(); }
  void validate() const;

  /// Zero edge logits (p = 0.5) and N(0, score_std^2) permutation scores.
  static DpDagModel initial(std::size_t n, PermMode mode, double tau, std::uint64_t seed,
                            double score_std = 0.01);
};

struct DagSample {
  AdjacencyMatrix hard;
  Tensor soft;  // soft edge values on the hard permutation's allowed pairs, 0 elsewhere
  PermutationMatrix perm;
};

/// (Pi^T M Pi)(i, j) = 1 iff perm[i] < perm[j], M the strict upper-triangular ones.
Tensor order_mask(const PermutationMatrix& pi);

/// Draws the permutation first, then the n×n edge matrix, from `noise`.
DagSample sample_dag(const DpDagModel& model, GumbelSource* noise);

/// Differentiable sample E ∘ (Pi^T M Pi) with the diagonal zeroed. `logits` and `scores` hold the
/// model's parameters on the tape; `model` supplies temperatures and modes.
/// Consumes noise in the same order as the plain sample_dag, so equal seeds
/// yield equal hard samples.
ad::Var sample_dag(ad::Var logits, ad::Var scores, const DpDagModel& model, GumbelSource* noise,
                   Estimator est, DagSample* hard_out = nullptr);

/// Deterministic (noise-free) permutation of the model.
PermutationMatrix deterministic_permutation(const DpDagModel& model);

struct EdgeScores {
  Tensor directed;    // sigmoid(logit) where the deterministic order allows the edge, else 0
  Tensor undirected;  // directed + directed^T
};

EdgeScores edge_scores(const DpDagModel& model);

/// Keeps the edges whose directed score is strictly greater than t.
AdjacencyMatrix threshold_dag(const DpDagModel& model, double t);

nlohmann::json model_to_json(const DpDagModel& model);
DpDagModel model_from_json(const nlohmann::json& j);
void save_model(const std::string& path, const DpDagModel& model);
DpDagModel load_model(const std::string& path);

nlohmann::json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const nlohmann::json& j);

}  // namespace dpdag
