#pragma once

// Variational DAG learning: jointly fits the DP-DAG edge/permutation
// parameters and the per-node mechanisms by minimizing
//   mean_batch sum_i (x_i - f_i(A_i ∘ x))^2  +  lambda * sum_{i != j} KL(Ber(phi_ij) || Ber(prior))
// with one straight-through DAG sample A per step, Adam, and early stopping
// on a deterministic validation loss.

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dpdag/autodiff.hpp"
#include "dpdag/dp_dag.hpp"
#include "dpdag/mechanisms.hpp"
#include "dpdag/sem.hpp"
#include "json.hpp"

namespace dpdag {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t hidden = 16;
  PermMode perm_mode = PermMode::TopK;
  double prior_p = 1e-2;
  double lambda = 1e-2;
  double tau = 1.0;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 1000;
  std::size_t patience = 10;
  std::size_t val_check_every = 2;
  std::size_t dag_samples = 1;
  int sinkhorn_iters = 20;
  double score_init_std = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Missing keys keep their defaults; throws ParameterError on invalid values.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();  // NaN when not checked
  double wall_time = 0.0;
};

struct FitResult {
  DpDagModel model;
  MechanismNet mechanisms;
  std::vector<EpochRecord> history;
  double wall_time_seconds = 0.0;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  bool diverged = false;
};

/// Everything gradient descent touches.
struct Learnables {
  Parameter logits;
  Parameter scores;
  MechanismNet mechanisms;

  static Learnables initial(std::size_t n, const TrainConfig& cfg);
  std::vector<Parameter*> all();
  void zero_grad();
  /// Model view with the current parameter values.
  DpDagModel model(const TrainConfig& cfg) const;
};

/// Bernoulli KL in closed form, KL(Ber(q) || Ber(p)).
double bernoulli_kl(double q, double p);

struct ElboTerms {
  ad::Var loss;
  ad::Var reconstruction;
  ad::Var kl;
};

/// Builds the loss on `tape` for one batch. With `fixed_adjacency` the DAG is
/// not sampled (GT-DAG baseline); `est` picks straight-through or fully
/// relaxed samples. Throws DivergenceError on a non-finite loss.
ElboTerms elbo_loss(ad::Tape& tape, const Tensor& batch, Learnables& params, const TrainConfig& cfg,
                    GumbelSource* noise, Estimator est = Estimator::StraightThrough,
                    const AdjacencyMatrix* fixed_adjacency = nullptr);

/// Loss value only.
double elbo_loss_value(const Tensor& batch, Learnables& params, const TrainConfig& cfg, GumbelSource* noise);

/// Deterministic loss: noise-free permutation, soft edge probabilities.
/// Returns (reconstruction, full loss).
std::pair<double, double> validation_loss(const Tensor& x, Learnables& params, const TrainConfig& cfg,
                                          const AdjacencyMatrix* fixed_adjacency = nullptr);

struct FitHooks {
  /// Called after every epoch with the current (not best) model.
  std::function<void(const EpochRecord&, const DpDagModel&)> on_epoch;
  /// Called with every hard DAG sampled during training.
  std::function<void(const AdjacencyMatrix&)> on_sample;
};

FitResult fit(const SemDataset& data, const TrainConfig& cfg, const FitHooks& hooks = {});

/// GT-DAG baseline: same objective and schedule with the adjacency frozen.
FitResult fit_fixed(const SemDataset& data, const AdjacencyMatrix& adjacency, const TrainConfig& cfg);

/// X̂ from the mechanisms and the thresholded model DAG.
Tensor predict(const FitResult& fit, const Tensor& x, double threshold = 0.5);

struct DirectFitOptions {
  double learning_rate = 1e-1;
  std::size_t steps = 3000;
  std::uint64_t seed = 0;
};

/// Minimizes |A - A*|^2 over straight-through samples A of `model`.
DpDagModel fit_direct(const AdjacencyMatrix& truth, DpDagModel model, const DirectFitOptions& opts);

/// Adam with bias correction over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step();

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history);

nlohmann::json fit_to_json(const FitResult& fit);
/// Loads the model and mechanisms of a trained checkpoint.
FitResult fit_from_json(const nlohmann::json& j);

}  // namespace dpdag
