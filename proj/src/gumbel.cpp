#include "dpdag/gumbel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dpdag/errors.hpp"
#include "dpdag/kernels.hpp"

namespace dpdag {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_tau(double tau, const char* who) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw ParameterError(std::string(who) + ": temperature must be positive, got " + std::to_string(tau));
  }
}

double max_row_deviation(const Tensor& log_m) {
  double dev = 0.0;
  for (std::size_t r = 0; r < log_m.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < log_m.cols(); ++c) s += std::exp(log_m(r, c));
    dev = std::max(dev, std::abs(s - 1.0));
  }
  return dev;
}

}  // namespace

// --- noise -------------------------------------------------------------------

GumbelSource::GumbelSource(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), key_(splitmix64(seed ^ splitmix64(stream + 0x632BE59BD9B4E019ULL))) {}

double GumbelSource::uniform() {
  const std::uint64_t bits = splitmix64(key_ + 0xD1B54A32D192ED03ULL * ++counter_);
  const double u = static_cast<double>(bits >> 11) * 0x1.0p-53;
  return std::clamp(u, kUniformFloor, 1.0 - kUniformFloor);
}

double GumbelSource::gumbel() { return -std::log(-std::log(uniform())); }

Tensor GumbelSource::gumbel(std::size_t rows, std::size_t cols) {
  Tensor g(rows, cols);
  for (double& v : g.data()) v = gumbel();
  return g;
}

std::string to_string(PermMode m) { return m == PermMode::Sinkhorn ? "sinkhorn" : "topk"; }

PermMode parse_perm_mode(const std::string& s) {
  if (s == "sinkhorn") return PermMode::Sinkhorn;
  if (s == "topk" || s == "top-k") return PermMode::TopK;
  throw ParameterError("unknown permutation mode '" + s + "' (expected sinkhorn|topk)");
}

void EdgeParams::validate() const {
  check_tau(tau, "edge params");
  if (logits.rows() != logits.cols()) throw DimensionError("edge params: logits " + shape_string(logits) + " not square");
}

void PermutationParams::validate() const {
  check_tau(tau, "permutation params");
  if (sinkhorn_iters < 1) throw ParameterError("permutation params: sinkhorn_iters must be >= 1");
  if (mode == PermMode::Sinkhorn && scores.rows() != scores.cols()) {
    throw ParameterError("permutation params: Sinkhorn scores must be n x n, got " + shape_string(scores));
  }
  if (mode == PermMode::TopK && scores.rows() != 1) {
    throw ParameterError("permutation params: Top-k scores must be 1 x n, got " + shape_string(scores));
  }
}

// --- edges -------------------------------------------------------------------

namespace {
// Logistic noise G1 - G2 for every entry, row-major.
Tensor edge_noise(std::size_t n, GumbelSource* noise) {
  Tensor l(n, n);
  if (noise != nullptr) {
    for (double& v : l.data()) {
      const double g1 = noise->gumbel();
      const double g2 = noise->gumbel();
      v = g1 - g2;
    }
  }
  return l;
}
}  // namespace

EdgeSample sample_edges(const EdgeParams& params, GumbelSource* noise) {
  params.validate();
  const std::size_t n = params.n();
  Tensor soft = edge_noise(n, noise);
  for (std::size_t k = 0; k < soft.size(); ++k) soft[k] = sigmoid((params.logits[k] + soft[k]) * (1.0 / params.tau));
  return {BinaryMatrix::from_tensor(soft, 0.5), std::move(soft)};
}

ad::Var sample_edges(ad::Var logits, double tau, GumbelSource* noise, Estimator est, BinaryMatrix* hard_out) {
  check_tau(tau, "sample_edges");
  if (logits.rows() != logits.cols()) throw DimensionError("sample_edges: logits " + shape_string(logits.value()));
  ad::Tape& t = *logits.tape;
  ad::Var perturbed = ad::add(logits, t.constant(edge_noise(logits.rows(), noise)));
  ad::Var soft = ad::sigmoid(ad::scale(perturbed, 1.0 / tau));
  BinaryMatrix hard = BinaryMatrix::from_tensor(soft.value(), 0.5);
  ad::Var out = est == Estimator::StraightThrough ? ad::straight_through(hard.to_tensor(), soft) : soft;
  if (hard_out != nullptr) *hard_out = std::move(hard);
  return out;
}

// --- Sinkhorn ----------------------------------------------------------------

Tensor sinkhorn_operator(const Tensor& m, int iters, double tau, double tol) {
  check_tau(tau, "sinkhorn_operator");
  if (m.rows() != m.cols()) throw DimensionError("sinkhorn_operator: " + shape_string(m) + " not square");
  if (iters < 1) throw ParameterError("sinkhorn_operator: iters must be >= 1");
  Tensor x = m;
  for (double& v : x.data()) v *= 1.0 / tau;
  for (int it = 0; it < iters; ++it) {
    kernels::log_normalize_rows(x);
    kernels::log_normalize_cols(x);
    if (tol > 0.0 && max_row_deviation(x) < tol) break;
  }
  for (double& v : x.data()) v = std::exp(v);
  return x;
}

ad::Var sinkhorn_operator(ad::Var m, int iters, double tau, double tol) {
  check_tau(tau, "sinkhorn_operator");
  if (m.rows() != m.cols()) throw DimensionError("sinkhorn_operator: " + shape_string(m.value()) + " not square");
  if (iters < 1) throw ParameterError("sinkhorn_operator: iters must be >= 1");
  ad::Var x = ad::scale(m, 1.0 / tau);
  for (int it = 0; it < iters; ++it) {
    x = ad::log_col_normalize(ad::log_row_normalize(x));
    if (tol > 0.0 && max_row_deviation(x.value()) < tol) break;
  }
  return ad::exp(x);
}

// Shortest augmenting path with potentials (Jonker-Volgenant style), on cost = -profit.
std::vector<std::size_t> hungarian_assignment(const Tensor& profit) {
  if (profit.rows() != profit.cols()) throw DimensionError("hungarian: " + shape_string(profit) + " not square");
  for (double x : profit.data())
    if (!std::isfinite(x)) throw ParameterError("hungarian: non-finite profit entry");
  const std::size_t n = profit.rows();
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; column 0 is the virtual start.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), min_to(n + 1);
  std::vector<std::size_t> row_of(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    row_of[0] = i;
    std::size_t j0 = 0;
    std::fill(min_to.begin(), min_to.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = row_of[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = -profit(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < min_to[j]) {
          min_to[j] = cur;
          way[j] = j0;
        }
        if (min_to[j] < delta) {
          delta = min_to[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[row_of[j]] += delta;
          v[j] -= delta;
        } else {
          min_to[j] -= delta;
        }
      }
      j0 = j1;
    } while (row_of[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      row_of[j0] = row_of[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[row_of[j] - 1] = j - 1;
  return assignment;
}

PermutationMatrix hungarian(const Tensor& profit) {
  return PermutationMatrix::from_row_assignment(hungarian_assignment(profit));
}

// --- SoftSort ----------------------------------------------------------------

std::vector<std::size_t> argsort_descending(std::span<const double> s) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  return idx;
}

Tensor softsort(const Tensor& s, double tau) {
  check_tau(tau, "softsort");
  if (s.rows() != 1) throw DimensionError("softsort: expected a row vector, got " + shape_string(s));
  const std::size_t n = s.cols();
  const auto order = argsort_descending(s.data());
  Tensor out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = std::abs(s[order[i]] - s[j]) * (-1.0 / tau);
  kernels::log_normalize_rows(out);
  for (double& v : out.data()) v = std::exp(v);
  return out;
}

ad::Var softsort(ad::Var s, double tau) {
  check_tau(tau, "softsort");
  if (s.rows() != 1) throw DimensionError("softsort: expected a row vector, got " + shape_string(s.value()));
  ad::Var sorted = ad::permute_cols(s, argsort_descending(s.value().data()));
  return ad::softmax_rows(ad::scale(ad::pairwise_abs_diff(sorted, s), -1.0 / tau));
}

// --- permutations --------------------------------------------------------------

namespace {
Tensor perturbed_scores(const Tensor& scores, GumbelSource* noise) {
  Tensor x = scores;
  if (noise != nullptr)
    for (double& v : x.data()) v += noise->gumbel();
  return x;
}
}  // namespace

PermutationSample sample_permutation_sinkhorn(const PermutationParams& params, GumbelSource* noise) {
  params.validate();
  if (params.mode != PermMode::Sinkhorn) throw ParameterError("sample_permutation_sinkhorn: mode is not Sinkhorn");
  Tensor soft = sinkhorn_operator(perturbed_scores(params.scores, noise), params.sinkhorn_iters, params.tau,
                                  params.sinkhorn_tol);
  return {hungarian(soft), std::move(soft)};
}

PermutationSample sample_permutation_topk(const PermutationParams& params, GumbelSource* noise) {
  params.validate();
  if (params.mode != PermMode::TopK) throw ParameterError("sample_permutation_topk: mode is not TopK");
  const Tensor s = perturbed_scores(params.scores, noise);
  return {PermutationMatrix::from_row_assignment(argsort_descending(s.data())), softsort(s, params.tau)};
}

PermutationSample sample_permutation(const PermutationParams& params, GumbelSource* noise) {
  return params.mode == PermMode::Sinkhorn ? sample_permutation_sinkhorn(params, noise)
                                           : sample_permutation_topk(params, noise);
}

ad::Var sample_permutation(ad::Var scores, const PermutationParams& params, GumbelSource* noise, Estimator est,
                           PermutationMatrix* hard_out) {
  PermutationParams shape_check = params;
  shape_check.scores = Tensor(scores.rows(), scores.cols());
  shape_check.validate();
  ad::Tape& t = *scores.tape;
  ad::Var perturbed = scores;
  if (noise != nullptr) perturbed = ad::add(scores, t.constant(perturbed_scores(Tensor(scores.rows(), scores.cols()), noise)));

  ad::Var soft;
  PermutationMatrix hard;
  if (params.mode == PermMode::Sinkhorn) {
    soft = sinkhorn_operator(perturbed, params.sinkhorn_iters, params.tau, params.sinkhorn_tol);
    hard = hungarian(soft.value());
  } else {
    soft = softsort(perturbed, params.tau);
    hard = PermutationMatrix::from_row_assignment(argsort_descending(perturbed.value().data()));
  }
  ad::Var out = est == Estimator::StraightThrough ? ad::straight_through(hard.matrix(), soft) : soft;
  if (hard_out != nullptr) *hard_out = std::move(hard);
  return out;
}

}  // namespace dpdag
