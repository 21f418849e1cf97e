#pragma once

// Reproducible experiment runs: dataset generation, training, evaluation,
// sampling benchmarks, direct structure fitting and grid search. Every
// artifact written gets an entry in its directory's manifest.json recording
// the hash of the producing spec, the seed and the library version.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dpdag/metrics.hpp"
#include "dpdag/sem.hpp"
#include "dpdag/trainer.hpp"
#include "json.hpp"

namespace dpdag {

const char* library_version();

/// FNV-1a 64-bit hash of the compact JSON serialization, as 16 hex digits.
std::string spec_hash(const nlohmann::json& spec);

/// $DPDAG_OUTPUT_ROOT if set and non-empty, otherwise "runs".
std::filesystem::path default_output_root();

/// Appends (or replaces) the entry for `artifact` in `dir`/manifest.json.
void record_artifact(const std::filesystem::path& dir, const std::string& artifact, const nlohmann::json& spec,
                     std::uint64_t seed);

// --- generate ------------------------------------------------------------------

/// One dataset per seed under `out_dir`/<label>-s<seed>; returns the directories.
std::vector<std::filesystem::path> generate_datasets(GenSpec base, const std::vector<std::uint64_t>& seeds,
                                                     const std::filesystem::path& out_dir);

// --- train / eval --------------------------------------------------------------

/// Fits `dataset_dir` and writes model.json and history.csv into `out_dir`.
FitResult train_run(const std::filesystem::path& dataset_dir, const TrainConfig& cfg,
                    const std::filesystem::path& out_dir);

struct EvalOptions {
  std::vector<double> shd_thresholds{0.3, 0.5, 0.7, 0.9};
  double mse_threshold = 0.5;
  std::size_t sample_repetitions = 10;
  std::uint64_t seed = 0;
};

/// Structure metrics of the fitted model plus test-split mechanism MSE.
MetricsReport evaluate(const FitResult& fit, const SemDataset& data, const EvalOptions& opts = {});

/// Writes metrics.json and metrics.csv into `out_dir`.
void write_metrics(const std::filesystem::path& out_dir, const MetricsReport& report, const nlohmann::json& spec,
                   std::uint64_t seed);

// --- bench ---------------------------------------------------------------------

struct BenchRow {
  std::size_t n = 0;
  PermMode mode = PermMode::TopK;
  MeanSd seconds;
};

std::vector<BenchRow> bench_sweep(const std::vector<std::size_t>& ns, const std::vector<PermMode>& modes,
                                  std::size_t repetitions, std::uint64_t seed);
void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

/// Least-squares slope of log(median seconds) against log(n) for one mode.
double loglog_slope(const std::vector<BenchRow>& rows, PermMode mode);

// --- direct --------------------------------------------------------------------

struct DirectRow {
  PermMode mode = PermMode::TopK;
  double learning_rate = 0.0;
  StructureAucs aucs;
};

/// fit_direct from a fresh model for every learning rate; scores are the
/// fitted model's edge scores.
std::vector<DirectRow> direct_runs(const AdjacencyMatrix& truth, PermMode mode, const std::vector<double>& lrs,
                                   std::size_t steps, std::uint64_t seed);
void write_direct_csv(std::ostream& out, const std::vector<DirectRow>& rows);

// --- grid ----------------------------------------------------------------------

struct GridAxes {
  std::vector<PermMode> perm_modes{PermMode::Sinkhorn, PermMode::TopK};
  std::vector<double> priors{1e-2, 1e-1};
  std::vector<double> lambdas{0.0, 1e-2, 1e-1};
};

struct GridEntry {
  TrainConfig config;
  double val_reconstruction = 0.0;
  double val_loss = 0.0;
  double wall_time_seconds = 0.0;
};

struct GridResult {
  std::vector<GridEntry> entries;
  std::size_t best = 0;
};

/// Trains every combination (one run per worker thread) and selects the
/// lowest validation reconstruction loss.
GridResult grid_search(const SemDataset& data, const TrainConfig& base, const GridAxes& axes, std::size_t workers);
nlohmann::json to_json(const GridResult& g);

}  // namespace dpdag
