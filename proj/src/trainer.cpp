#include "dpdag/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <cstdio>
#include <limits>

#include "dpdag/errors.hpp"

namespace dpdag {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Tensor off_diagonal_ones(std::size_t n) {
  Tensor m(n, n, 1.0);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 0.0;
  return m;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Stream ids for the independent random sources of one run.
constexpr std::uint64_t kNoiseStream = 1;
constexpr std::uint64_t kBatchStream = 0xB47C4ULL;
constexpr std::uint64_t kInitStream = 0x1217ULL;

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ParameterError("train config: learning_rate must be positive");
  if (hidden == 0) throw ParameterError("train config: hidden must be positive");
  if (!(prior_p >= 1e-2 && prior_p <= 1e-1)) throw ParameterError("train config: prior_p must lie in [1e-2, 1e-1]");
  if (!(lambda >= 0.0 && lambda <= 1e-1)) throw ParameterError("train config: lambda must lie in [0, 1e-1]");
  if (!(tau > 0.0)) throw ParameterError("train config: tau must be positive");
  if (batch_size == 0) throw ParameterError("train config: batch_size must be positive");
  if (max_epochs == 0) throw ParameterError("train config: max_epochs must be positive");
  if (patience < 1) throw ParameterError("train config: patience must be >= 1");
  if (val_check_every < 1) throw ParameterError("train config: val_check_every must be >= 1");
  if (dag_samples < 1) throw ParameterError("train config: dag_samples must be >= 1");
  if (sinkhorn_iters < 1) throw ParameterError("train config: sinkhorn_iters must be >= 1");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"hidden", c.hidden},
          {"perm_mode", to_string(c.perm_mode)}, {"prior_p", c.prior_p},
          {"lambda", c.lambda},               {"tau", c.tau},
          {"batch_size", c.batch_size},       {"max_epochs", c.max_epochs},
          {"patience", c.patience},           {"val_check_every", c.val_check_every},
          {"dag_samples", c.dag_samples},     {"sinkhorn_iters", c.sinkhorn_iters},
          {"score_init_std", c.score_init_std}, {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.hidden = j.value("hidden", c.hidden);
    c.perm_mode = parse_perm_mode(j.value("perm_mode", to_string(c.perm_mode)));
    c.prior_p = j.value("prior_p", c.prior_p);
    c.lambda = j.value("lambda", c.lambda);
    c.tau = j.value("tau", c.tau);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.val_check_every = j.value("val_check_every", c.val_check_every);
    c.dag_samples = j.value("dag_samples", c.dag_samples);
    c.sinkhorn_iters = j.value("sinkhorn_iters", c.sinkhorn_iters);
    c.score_init_std = j.value("score_init_std", c.score_init_std);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

// --- learnables ----------------------------------------------------------------

Learnables Learnables::initial(std::size_t n, const TrainConfig& cfg) {
  const DpDagModel m = DpDagModel::initial(n, cfg.perm_mode, cfg.tau, cfg.seed ^ kInitStream, cfg.score_init_std);
  Learnables p;
  p.logits = Parameter(m.edges.logits);
  p.scores = Parameter(m.perm.scores);
  p.mechanisms = MechanismNet::initial(n, cfg.hidden, cfg.seed);
  return p;
}

std::vector<Parameter*> Learnables::all() {
  std::vector<Parameter*> out{&logits, &scores};
  for (Parameter* q : mechanisms.parameters()) out.push_back(q);
  return out;
}

void Learnables::zero_grad() {
  for (Parameter* q : all()) q->zero_grad();
}

DpDagModel Learnables::model(const TrainConfig& cfg) const {
  DpDagModel m;
  m.edges.logits = logits.value;
  m.edges.tau = cfg.tau;
  m.perm.mode = cfg.perm_mode;
  m.perm.scores = scores.value;
  m.perm.tau = cfg.tau;
  m.perm.sinkhorn_iters = cfg.sinkhorn_iters;
  return m;
}

double bernoulli_kl(double q, double p) {
  auto term = [](double a, double b) { return a == 0.0 ? 0.0 : a * std::log(a / b); };
  return term(q, p) + term(1.0 - q, 1.0 - p);
}

// --- loss ----------------------------------------------------------------------

namespace {

ad::Var kl_term(ad::Tape& tape, ad::Var logits, double prior) {
  const std::size_t n = logits.rows();
  return ad::sum(ad::mul(ad::bernoulli_kl(logits, prior), tape.constant(off_diagonal_ones(n))));
}

ad::Var reconstruction(ad::Tape& tape, ad::Var x, MechanismNet& net, ad::Var mask) {
  ad::Var pred = mechanism_forward(tape, net, x, mask);
  return ad::scale(ad::squared_norm(ad::sub(x, pred)), 1.0 / static_cast<double>(x.rows()));
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw DivergenceError(std::string("non-finite ") + what);
}

}  // namespace

namespace {

ElboTerms elbo_impl(ad::Tape& tape, const Tensor& batch, Learnables& params, const TrainConfig& cfg,
                    GumbelSource* noise, Estimator est, const AdjacencyMatrix* fixed_adjacency,
                    std::vector<AdjacencyMatrix>* samples_out) {
  const std::size_t n = params.logits.value.rows();
  if (batch.cols() != n) throw DimensionError("elbo_loss: batch " + shape_string(batch) + " for n=" + std::to_string(n));
  ad::Var x = tape.constant(batch);
  ad::Var logits = tape.param(params.logits);

  ad::Var recon;
  if (fixed_adjacency != nullptr) {
    recon = reconstruction(tape, x, params.mechanisms, tape.constant(fixed_adjacency->to_tensor()));
  } else {
    ad::Var scores = tape.param(params.scores);
    const DpDagModel shape = params.model(cfg);
    for (std::size_t s = 0; s < cfg.dag_samples; ++s) {
      DagSample drawn;
      ad::Var dag = sample_dag(logits, scores, shape, noise, est, samples_out ? &drawn : nullptr);
      if (samples_out) samples_out->push_back(drawn.hard);
      ad::Var r = reconstruction(tape, x, params.mechanisms, dag);
      recon = s == 0 ? r : ad::add(recon, r);
    }
    if (cfg.dag_samples > 1) recon = ad::scale(recon, 1.0 / static_cast<double>(cfg.dag_samples));
  }
  ad::Var kl = kl_term(tape, logits, cfg.prior_p);
  ad::Var loss = ad::add(recon, ad::scale(kl, cfg.lambda));
  check_finite(loss.value().item(), "ELBO loss");
  return {loss, recon, kl};
}

}  // namespace

ElboTerms elbo_loss(ad::Tape& tape, const Tensor& batch, Learnables& params, const TrainConfig& cfg,
                    GumbelSource* noise, Estimator est, const AdjacencyMatrix* fixed_adjacency) {
  return elbo_impl(tape, batch, params, cfg, noise, est, fixed_adjacency, nullptr);
}

double elbo_loss_value(const Tensor& batch, Learnables& params, const TrainConfig& cfg, GumbelSource* noise) {
  ad::Tape tape;
  return elbo_loss(tape, batch, params, cfg, noise).loss.value().item();
}

std::pair<double, double> validation_loss(const Tensor& x, Learnables& params, const TrainConfig& cfg,
                                          const AdjacencyMatrix* fixed_adjacency) {
  const std::size_t n = params.logits.value.rows();
  Tensor mask;
  if (fixed_adjacency != nullptr) {
    mask = fixed_adjacency->to_tensor();
  } else {
    const DpDagModel m = params.model(cfg);
    mask = order_mask(deterministic_permutation(m));
    for (std::size_t k = 0; k < mask.size(); ++k) mask[k] *= sigmoid(m.edges.logits[k]);
  }
  ad::Tape tape;
  const double recon = reconstruction(tape, tape.constant(x), params.mechanisms, tape.constant(std::move(mask))).value().item();
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) kl += bernoulli_kl(sigmoid(params.logits.value(i, j)), cfg.prior_p);
  return {recon, recon + cfg.lambda * kl};
}

// --- Adam ----------------------------------------------------------------------

Adam::Adam(std::vector<Parameter*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (Parameter* p : params_) {
    m_.emplace_back(p->value.rows(), p->value.cols());
    v_.emplace_back(p->value.rows(), p->value.cols());
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    if (!p.grad.same_shape(p.value)) continue;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * g;
      v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * g * g;
      p.value[i] -= lr_ * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps_);
    }
  }
}

// --- training loop -------------------------------------------------------------

namespace {

FitResult fit_impl(const SemDataset& data, const TrainConfig& cfg, const AdjacencyMatrix* fixed, const FitHooks& hooks) {
  cfg.validate();
  if (data.split.train.empty() || data.split.val.empty()) throw ParameterError("fit: dataset needs train and val rows");
  const auto t0 = Clock::now();
  const std::size_t n = data.n();
  Learnables params = Learnables::initial(n, cfg);
  std::vector<Parameter*> trainable = fixed ? params.mechanisms.parameters() : params.all();
  Adam adam(trainable, cfg.learning_rate);
  GumbelSource noise(cfg.seed, kNoiseStream);
  std::mt19937_64 batch_rng(cfg.seed ^ kBatchStream);
  const Tensor val_x = data.rows(data.split.val);
  std::vector<std::size_t> order = data.split.train;

  FitResult result;
  result.model = params.model(cfg);
  result.mechanisms = params.mechanisms;
  std::size_t bad_checks = 0;
  std::vector<AdjacencyMatrix> samples;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), batch_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    try {
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        const Tensor batch = data.rows(std::vector<std::size_t>(order.begin() + start, order.begin() + end));
        params.zero_grad();
        ad::Tape tape;
        samples.clear();
        ElboTerms terms = elbo_impl(tape, batch, params, cfg, &noise, Estimator::StraightThrough, fixed,
                                    hooks.on_sample ? &samples : nullptr);
        tape.backward(terms.loss);
        for (const AdjacencyMatrix& a : samples) hooks.on_sample(a);
        adam.step();
        loss_sum += terms.loss.value().item();
        ++batches;
      }
    } catch (const DivergenceError&) {
      result.diverged = true;
      break;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    const bool check = epoch % cfg.val_check_every == 0;
    if (check) {
      rec.val_loss = validation_loss(val_x, params, cfg, fixed).second;
      if (!std::isfinite(rec.val_loss)) {
        result.diverged = true;
      } else if (rec.val_loss < result.best_val_loss) {
        result.best_val_loss = rec.val_loss;
        result.best_epoch = epoch;
        result.model = params.model(cfg);
        result.mechanisms = params.mechanisms;
        bad_checks = 0;
      } else {
        ++bad_checks;
      }
    }
    rec.wall_time = seconds_since(t0);
    result.history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec, params.model(cfg));
    if (result.diverged || bad_checks >= cfg.patience) break;
  }
  if (result.best_epoch == 0 && !result.diverged) {
    // never validated (max_epochs < val_check_every): keep the final state
    result.best_val_loss = validation_loss(val_x, params, cfg, fixed).second;
    result.best_epoch = result.history.empty() ? 0 : result.history.back().epoch;
    result.model = params.model(cfg);
    result.mechanisms = params.mechanisms;
  }
  result.wall_time_seconds = seconds_since(t0);
  return result;
}

}  // namespace

FitResult fit(const SemDataset& data, const TrainConfig& cfg, const FitHooks& hooks) {
  return fit_impl(data, cfg, nullptr, hooks);
}

FitResult fit_fixed(const SemDataset& data, const AdjacencyMatrix& adjacency, const TrainConfig& cfg) {
  if (adjacency.n() != data.n()) throw DimensionError("fit_fixed: adjacency size does not match data");
  FitResult r = fit_impl(data, cfg, &adjacency, {});
  return r;
}

Tensor predict(const FitResult& fit, const Tensor& x, double threshold) {
  return predict(fit.mechanisms, threshold_dag(fit.model, threshold), x);
}

DpDagModel fit_direct(const AdjacencyMatrix& truth, DpDagModel model, const DirectFitOptions& opts) {
  model.validate();
  if (truth.n() != model.n()) throw DimensionError("fit_direct: truth size does not match model");
  Parameter logits(model.edges.logits);
  Parameter scores(model.perm.scores);
  Adam adam({&logits, &scores}, opts.learning_rate);
  GumbelSource noise(opts.seed, kNoiseStream);
  const Tensor target = truth.to_tensor();
  for (std::size_t step = 0; step < opts.steps; ++step) {
    logits.zero_grad();
    scores.zero_grad();
    ad::Tape tape;
    ad::Var dag = sample_dag(tape.param(logits), tape.param(scores), model, &noise, Estimator::StraightThrough);
    ad::Var loss = ad::squared_norm(ad::sub(dag, tape.constant(target)));
    tape.backward(loss);
    adam.step();
  }
  model.edges.logits = logits.value;
  model.perm.scores = scores.value;
  return model;
}

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
  out << "epoch,train_loss,val_loss,wall_time\n";
  char buf[128];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,", r.epoch, r.train_loss);
    out << buf;
    if (std::isfinite(r.val_loss)) {
      std::snprintf(buf, sizeof buf, "%.10g", r.val_loss);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.6f\n", r.wall_time);
    out << buf;
  }
}

nlohmann::json fit_to_json(const FitResult& fit) {
  nlohmann::json j = model_to_json(fit.model);
  j["mechanisms"] = mechanisms_to_json(fit.mechanisms);
  j["best_epoch"] = fit.best_epoch;
  j["best_val_loss"] = fit.best_val_loss;
  j["wall_time_seconds"] = fit.wall_time_seconds;
  j["diverged"] = fit.diverged;
  return j;
}

FitResult fit_from_json(const nlohmann::json& j) {
  FitResult r;
  r.model = model_from_json(j);
  if (!j.contains("mechanisms")) throw ParseError("checkpoint: no mechanisms section");
  r.mechanisms = mechanisms_from_json(j.at("mechanisms"));
  if (r.mechanisms.n != r.model.n()) throw ParseError("checkpoint: mechanisms and model disagree on n");
  r.best_epoch = j.value("best_epoch", std::size_t{0});
  r.best_val_loss = j.value("best_val_loss", std::numeric_limits<double>::infinity());
  r.wall_time_seconds = j.value("wall_time_seconds", 0.0);
  r.diverged = j.value("diverged", false);
  return r;
}

}  // namespace dpdag
