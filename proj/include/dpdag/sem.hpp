#pragma once

// Synthetic structural-equation-model benchmarks: ER / scale-free DAGs,
// Gaussian-process (RBF) causal mechanisms with additive Gaussian noise, and
// 80/10/10 splits. Also reads and writes the on-disk dataset layout
//   {dir}/data.csv   observations, one row per sample
//   {dir}/truth.edges  ground-truth edge list ("u v" = u -> v, 1-based)
//   {dir}/meta.json  generator spec, standardization and split indices

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dpdag/graph.hpp"
#include "dpdag/tensor.hpp"
#include "json.hpp"

namespace dpdag {

enum class GraphKind { ER, SF };

std::string to_string(GraphKind k);
GraphKind parse_graph_kind(const std::string& s);

struct GenSpec {
  GraphKind kind = GraphKind::ER;
  std::size_t n = 10;
  std::size_t m = 10;
  std::size_t samples = 1000;
  double noise_std = 1.0;
  double bandwidth = 1.0;
  bool standardize = true;
  std::uint64_t seed = 0;

  void validate() const;
  /// "ER-10-10" style label.
  std::string label() const;
};

nlohmann::json to_json(const GenSpec& s);
GenSpec gen_spec_from_json(const nlohmann::json& j);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Shuffles [0, rows) and cuts it 80/10/10 (sizes rounded to nearest).
Split make_split(std::size_t rows, std::uint64_t seed);

struct SemDataset {
  std::string name;
  Tensor x;  // samples × nodes
  AdjacencyMatrix truth;
  Split split;
  nlohmann::json meta = nlohmann::json::object();

  std::size_t n() const { return x.cols(); }
  std::size_t samples() const { return x.rows(); }
  Tensor rows(const std::vector<std::size_t>& idx) const;
};

/// ER: uniform node order, then m distinct order-consistent pairs.
/// SF: preferential attachment with round(m/n) edges per new node, oriented
/// new -> existing, then randomly relabeled.
AdjacencyMatrix gen_graph(const GenSpec& spec);

/// Samples every node in topological order; a non-root node gets one GP draw
/// over its observed parent vectors plus N(0, noise_std^2) noise.
SemDataset gen_mechanisms_and_sample(const AdjacencyMatrix& truth, const GenSpec& spec);

/// One draw f ~ N(0, K(P, P)), K the RBF kernel, at the rows of `parents`.
/// Equal rows get exactly equal values. Throws GenerationError if the
/// jittered Cholesky factorization fails.
std::vector<double> gp_draw(const Tensor& parents, double bandwidth, std::mt19937_64& rng);

/// gen_graph + gen_mechanisms_and_sample.
SemDataset generate_dataset(const GenSpec& spec);

/// Zero mean, unit variance per column (population std). Returns (means, stds).
std::pair<std::vector<double>, std::vector<double>> standardize_columns(Tensor& x);

/// Comma-separated reals; an optional all-text header line is skipped.
Tensor read_csv(std::istream& in);
void write_csv(std::ostream& out, const Tensor& x);

SemDataset load_csv(const std::string& path, const std::string& truth_path, std::uint64_t split_seed,
                    bool standardize = true);

void save_dataset(const std::string& dir, const SemDataset& ds);
SemDataset load_dataset(const std::string& dir);

}  // namespace dpdag
