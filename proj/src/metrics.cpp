#include "dpdag/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include <omp.h>

#include "dpdag/errors.hpp"

namespace dpdag {

namespace {

struct Counts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

Counts check_labels(const std::vector<double>& scores, const std::vector<int>& labels, const char* what) {
  if (scores.size() != labels.size())
    throw DimensionError(std::string(what) + ": scores and labels differ in length");
  Counts c;
  for (int l : labels) {
    if (l == 1) ++c.pos;
    else if (l == 0) ++c.neg;
    else throw ParameterError(std::string(what) + ": labels must be 0 or 1");
  }
  if (c.pos == 0 || c.neg == 0)
    throw MetricUndefinedError(std::string(what) + ": needs at least one positive and one negative label");
  return c;
}

std::vector<std::size_t> order_by_score_desc(const std::vector<double>& scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

// Calls f(tp, fp) after each group of equal scores, sweeping from the highest
// threshold down.
template <class F>
void sweep(const std::vector<double>& scores, const std::vector<int>& labels, F f) {
  const auto idx = order_by_score_desc(scores);
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < idx.size();) {
    const double s = scores[idx[k]];
    while (k < idx.size() && scores[idx[k]] == s) {
      if (labels[idx[k]] == 1) ++tp;
      else ++fp;
      ++k;
    }
    f(tp, fp);
  }
}

}  // namespace

double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels) {
  const Counts c = check_labels(scores, labels, "auc_roc");
  double area = 0.0;
  std::size_t prev_tp = 0, prev_fp = 0;
  sweep(scores, labels, [&](std::size_t tp, std::size_t fp) {
    area += static_cast<double>(fp - prev_fp) * static_cast<double>(tp + prev_tp) / 2.0;
    prev_tp = tp;
    prev_fp = fp;
  });
  return area / (static_cast<double>(c.pos) * static_cast<double>(c.neg));
}

double auc_pr(const std::vector<double>& scores, const std::vector<int>& labels) {
  const Counts c = check_labels(scores, labels, "auc_pr");
  double area = 0.0;
  std::size_t prev_tp = 0;
  sweep(scores, labels, [&](std::size_t tp, std::size_t fp) {
    if (tp != prev_tp) {
      const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
      area += static_cast<double>(tp - prev_tp) / static_cast<double>(c.pos) * precision;
    }
    prev_tp = tp;
  });
  return area;
}

PairUniverse directed_pairs(const Tensor& scores, const AdjacencyMatrix& truth) {
  const std::size_t n = truth.n();
  if (scores.rows() != n || scores.cols() != n) throw DimensionError("directed_pairs: score shape " + shape_string(scores));
  PairUniverse u;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) {
        u.scores.push_back(scores(i, j));
        u.labels.push_back(truth.has_edge(j, i) ? 1 : 0);
      }
  return u;
}

PairUniverse undirected_pairs(const Tensor& scores, const AdjacencyMatrix& truth) {
  const std::size_t n = truth.n();
  if (scores.rows() != n || scores.cols() != n) throw DimensionError("undirected_pairs: score shape " + shape_string(scores));
  PairUniverse u;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      u.scores.push_back(scores(i, j) + scores(j, i));
      u.labels.push_back(truth.has_edge(i, j) || truth.has_edge(j, i) ? 1 : 0);
    }
  return u;
}

StructureAucs structure_aucs(const Tensor& directed_scores, const AdjacencyMatrix& truth) {
  const PairUniverse d = directed_pairs(directed_scores, truth);
  const PairUniverse u = undirected_pairs(directed_scores, truth);
  return {auc_pr(d.scores, d.labels), auc_roc(d.scores, d.labels), auc_pr(u.scores, u.labels),
          auc_roc(u.scores, u.labels)};
}

std::size_t shd(const AdjacencyMatrix& pred, const AdjacencyMatrix& truth) {
  if (pred.n() != truth.n()) throw DimensionError("shd: graphs differ in size");
  std::size_t d = 0;
  for (std::size_t i = 0; i < truth.n(); ++i)
    for (std::size_t j = i + 1; j < truth.n(); ++j)
      if (pred.has_edge(i, j) != truth.has_edge(i, j) || pred.has_edge(j, i) != truth.has_edge(j, i)) ++d;
  return d;
}

double mechanism_mse(const Tensor& x, const Tensor& x_hat) {
  if (!x.same_shape(x_hat)) throw DimensionError("mechanism_mse: " + shape_string(x) + " vs " + shape_string(x_hat));
  if (x.size() == 0) throw DimensionError("mechanism_mse: empty input");
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - x_hat[k]) * (x[k] - x_hat[k]);
  return s / static_cast<double>(x.size());
}

MeanSd mean_sd(const std::vector<double>& values) {
  MeanSd r;
  if (values.empty()) return r;
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t h = sorted.size() / 2;
  r.median = sorted.size() % 2 == 1 ? sorted[h] : 0.5 * (sorted[h - 1] + sorted[h]);
  return r;
}

MeanSd perturbation_confidence(const DpDagModel& model, const AdjacencyMatrix& truth, std::size_t k_moved,
                               std::size_t trials, std::uint64_t seed) {
  if (model.n() != truth.n()) throw DimensionError("perturbation_confidence: model and truth differ in size");
  return perturbation_confidence(edge_scores(model).directed, truth, k_moved, trials, seed);
}

MeanSd perturbation_confidence(const Tensor& s, const AdjacencyMatrix& truth, std::size_t k_moved,
                               std::size_t trials, std::uint64_t seed) {
  const std::size_t n = truth.n();
  if (s.rows() != n || s.cols() != n) throw DimensionError("perturbation_confidence: score shape " + shape_string(s));
  const auto edges = truth.edges();
  if (k_moved > edges.size()) throw ParameterError("perturbation_confidence: k_moved exceeds the edge count");
  if (trials == 0) throw ParameterError("perturbation_confidence: trials must be positive");
  // edges() yields (parent, child); the score of j -> i sits at s(i, j)
  auto score_of = [&](std::size_t parent, std::size_t child) { return s(child, parent); };
  double clean = 0.0;
  for (const auto& [p, c] : edges) clean += score_of(p, c);
  if (!(clean > 0.0)) throw MetricUndefinedError("perturbation_confidence: clean graph has zero score");

  std::mt19937_64 rng(seed);
  std::vector<double> rel;
  for (std::size_t t = 0; t < trials; ++t) {
    std::vector<std::vector<bool>> occ(n, std::vector<bool>(n, false));
    for (const auto& [p, c] : edges) occ[p][c] = true;
    std::vector<std::size_t> idx(edges.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<bool> moved(edges.size(), false);
    for (std::size_t k = 0; k < k_moved; ++k) moved[idx[k]] = true;
    std::vector<std::pair<std::size_t, std::size_t>> perturbed;
    for (std::size_t e = 0; e < edges.size(); ++e)
      if (!moved[e]) perturbed.push_back(edges[e]);
    for (std::size_t k = 0; k < k_moved; ++k) {
      std::vector<std::pair<std::size_t, std::size_t>> vacant;
      for (std::size_t p = 0; p < n; ++p)
        for (std::size_t c = 0; c < n; ++c)
          if (p != c && !occ[p][c]) vacant.emplace_back(p, c);
      if (vacant.empty()) break;
      std::uniform_int_distribution<std::size_t> pick(0, vacant.size() - 1);
      const auto e = vacant[pick(rng)];
      occ[e.first][e.second] = true;
      perturbed.push_back(e);
    }
    double sc = 0.0;
    for (const auto& [p, c] : perturbed) sc += score_of(p, c);
    rel.push_back(sc / clean);
  }
  return mean_sd(rel);
}

MeanSd bench_sampling(const DpDagModel& model, std::size_t repetitions, std::uint64_t seed) {
  if (repetitions == 0) throw ParameterError("bench_sampling: repetitions must be >= 1");
  model.validate();
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  GumbelSource noise(seed, 0);
  for (int w = 0; w < 3; ++w) (void)sample_dag(model, &noise);
  std::vector<double> times;
  times.reserve(repetitions);
  for (std::size_t r = 0; r < repetitions; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    DagSample s = sample_dag(model, &noise);
    const auto t1 = std::chrono::steady_clock::now();
    if (s.hard.n() != model.n()) throw ContractError("bench_sampling: wrong sample size");
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  omp_set_num_threads(saved);
  return mean_sd(times);
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j = {{"dataset", r.dataset},
                      {"seed", r.seed},
                      {"un_auc_pr", r.aucs.un_auc_pr},
                      {"un_auc_roc", r.aucs.un_auc_roc},
                      {"dir_auc_pr", r.aucs.dir_auc_pr},
                      {"dir_auc_roc", r.aucs.dir_auc_roc}};
  char key[32];
  for (const auto& [t, v] : r.shd_at) {
    std::snprintf(key, sizeof key, "shd@%g", t);
    j[key] = v;
  }
  j["mse"] = r.mse;
  j["mse_normalization"] = "mean over test rows and nodes";
  j["train_seconds"] = r.train_seconds;
  j["sample_seconds"] = r.sample_seconds;
  return j;
}

std::string csv_header(const MetricsReport& r) {
  std::string h = "dataset,seed,un_auc_pr,un_auc_roc,dir_auc_pr,dir_auc_roc";
  char buf[32];
  for (const auto& sv : r.shd_at) {
    std::snprintf(buf, sizeof buf, ",shd@%g", sv.first);
    h += buf;
  }
  return h + ",mse,train_seconds,sample_seconds";
}

std::string csv_row(const MetricsReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%llu,%.10g,%.10g,%.10g,%.10g", r.dataset.c_str(),
                static_cast<unsigned long long>(r.seed), r.aucs.un_auc_pr, r.aucs.un_auc_roc, r.aucs.dir_auc_pr,
                r.aucs.dir_auc_roc);
  std::string row = buf;
  for (const auto& sv : r.shd_at) row += "," + std::to_string(sv.second);
  std::snprintf(buf, sizeof buf, ",%.10g,%.6f,%.9f", r.mse, r.train_seconds, r.sample_seconds);
  return row + buf;
}

}  // namespace dpdag
