#pragma once

// Stochastic relaxations used by the DAG sampler: binary Gumbel-Softmax
// edges, Gumbel-Sinkhorn permutations (Sinkhorn operator + Hungarian) and
// Gumbel-Top-k permutations (SoftSort). Every sampler accepts a null noise
// source, which gives the deterministic, noise-free variant.
//
// Each sampler has a plain form returning (hard, soft) values and a tape form
// returning a differentiable Var whose forward value is either the hard
// sample (straight-through) or the soft relaxation.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dpdag/autodiff.hpp"
#include "dpdag/graph.hpp"
#include "dpdag/tensor.hpp"

namespace dpdag {

/// Standard Gumbel(0, 1) draws by inverse CDF over a counter-based uniform
/// stream: the k-th draw depends only on (seed, stream, k).
class GumbelSource {
 public:
  static constexpr double kUniformFloor = 1e-12;

  explicit GumbelSource(std::uint64_t seed, std::uint64_t stream = 0);

  /// Uniform in [1e-12, 1 - 1e-12].
  double uniform();
  double gumbel();
  Tensor gumbel(std::size_t rows, std::size_t cols);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

enum class PermMode { Sinkhorn, TopK };

std::string to_string(PermMode m);
/// Accepts "sinkhorn" / "topk" (also "top-k"); throws ParameterError.
PermMode parse_perm_mode(const std::string& s);

/// Whether tape samplers forward the hard sample or the relaxation.
enum class Estimator { StraightThrough, Relaxed };

struct EdgeParams {
  Tensor logits;  // n×n log-odds; diagonal unused
  double tau = 1.0;

  std::size_t n() const { return logits.rows(); }
  void validate() const;
};

struct PermutationParams {
  PermMode mode = PermMode::TopK;
  Tensor scores;  // n×n for Sinkhorn, 1×n for TopK
  double tau = 1.0;
  int sinkhorn_iters = 20;
  /// Sinkhorn stops early once every row sum is within this of 1.
  double sinkhorn_tol = 1e-6;

  std::size_t n() const { return scores.cols(); }
  void validate() const;
};

struct EdgeSample {
  BinaryMatrix hard;
  Tensor soft;
};

struct PermutationSample {
  PermutationMatrix hard;  // hard.matrix() is the forward (straight-through) matrix
  Tensor soft;
};

/// Binary Gumbel-Softmax with the two-Gumbel form:
/// soft = sigmoid((logit + G1 - G2) / tau), hard = soft > 0.5.
EdgeSample sample_edges(const EdgeParams& params, GumbelSource* noise);

/// S(m / tau) in log space: alternating row and column log-sum-exp
/// normalization, up to `iters` rounds with early exit at `tol`.
Tensor sinkhorn_operator(const Tensor& m, int iters, double tau, double tol = 1e-6);

/// Row assignment maximizing sum_r profit(r, assignment[r]); O(n^3).
std::vector<std::size_t> hungarian_assignment(const Tensor& profit);
/// The permutation matrix of hungarian_assignment (P(r, assignment[r]) = 1).
PermutationMatrix hungarian(const Tensor& profit);

/// Row i is softmax_j(-|sort_desc(s)_i - s_j| / tau).
Tensor softsort(const Tensor& s, double tau);

/// Stable descending argsort: ties keep the lower index first.
std::vector<std::size_t> argsort_descending(std::span<const double> s);

PermutationSample sample_permutation_sinkhorn(const PermutationParams& params, GumbelSource* noise);
PermutationSample sample_permutation_topk(const PermutationParams& params, GumbelSource* noise);
PermutationSample sample_permutation(const PermutationParams& params, GumbelSource* noise);

// --- tape forms ----------------------------------------------------------------

ad::Var sample_edges(ad::Var logits, double tau, GumbelSource* noise, Estimator est,
                     BinaryMatrix* hard_out = nullptr);

/// `scores` is the Var holding params.scores (the params' own tensor is ignored).
ad::Var sample_permutation(ad::Var scores, const PermutationParams& params, GumbelSource* noise,
                           Estimator est, PermutationMatrix* hard_out = nullptr);

ad::Var sinkhorn_operator(ad::Var m, int iters, double tau, double tol = 1e-6);
ad::Var softsort(ad::Var s, double tau);

}  // namespace dpdag
