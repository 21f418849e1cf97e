// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "dpdag/errors.hpp"
#include "dpdag/experiment.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dpdag;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- criterion 1 ---------------------------------------------------------------

Outcome any_time_validity() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t total = 0, acyclic = 0;
  auto check = [&](const DpDagModel& m, GumbelSource& noise) {
    ++total;
    try {
      if (is_acyclic(sample_dag(m, &noise).hard.matrix())) ++acyclic;
    } catch (const AcyclicityError&) {
    }
  };
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t n : {5u, 20u, 100u}) {
    for (PermMode mode : {PermMode::TopK, PermMode::Sinkhorn}) {
      GumbelSource noise(1000 * n + static_cast<int>(mode));
      // random parameters over a wide range of scales and temperatures
      for (int draw = 0; draw < 1000; ++draw) {
        if (draw % 10 == 0) {
          const double tau = std::exp(std::log(0.1) + u(rng) * std::log(100.0));
          const double score_std = std::exp(std::log(1e-3) + u(rng) * std::log(1e4));
          DpDagModel m = DpDagModel::initial(n, mode, tau, rng(), score_std);
          m.edges.logits = testing::random_tensor(n, n, rng(), -8, 8);
          for (int k = 0; k < 10; ++k) check(m, noise);
        }
      }
      // snapshots taken while training, plus every DAG drawn by the trainer
      GenSpec g;
      g.n = n;
      g.m = n;
      g.samples = 200;
      g.seed = n;
      const SemDataset data = generate_dataset(g);
      TrainConfig cfg;
      cfg.perm_mode = mode;
      cfg.max_epochs = n == 100 ? 3 : 8;
      cfg.learning_rate = 3e-2;
      cfg.hidden = 8;
      cfg.batch_size = 32;
      std::vector<DpDagModel> snapshots;
      FitHooks hooks;
      hooks.on_epoch = [&](const EpochRecord&, const DpDagModel& m) { snapshots.push_back(m); };
      hooks.on_sample = [&](const AdjacencyMatrix& a) {
        ++total;
        if (is_acyclic(a.matrix())) ++acyclic;
      };
      fit(data, cfg, hooks);
      const std::size_t per_snapshot = 700 / snapshots.size() + 1;
      for (const auto& m : snapshots)
        for (std::size_t k = 0; k < per_snapshot; ++k) check(m, noise);
    }
  }
  const double secs = seconds_since(t0);
  return {acyclic == total && total >= 10000 && secs < 60.0,
          fmt("%zu/%zu sampled DAGs acyclic (n in {5,20,100}, both samplers, random and mid-training parameters) "
              "in %.1f s",
              acyclic, total, secs)};
}

// --- criterion 2 ---------------------------------------------------------------

Outcome direct_learning() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<double> lrs{1.0, 0.1, 0.01, 0.001};
  auto average = [&](GraphKind kind, std::size_t n, std::size_t m, PermMode mode) {
    double pr = 0.0, roc = 0.0;
    std::size_t count = 0;
    for (std::uint64_t graph = 0; graph < 10; ++graph) {
      GenSpec g;
      g.kind = kind;
      g.n = n;
      g.m = m;
      g.seed = graph;
      for (const DirectRow& r : direct_runs(gen_graph(g), mode, lrs, 3000, graph)) {
        pr += r.aucs.dir_auc_pr;
        roc += r.aucs.dir_auc_roc;
        ++count;
      }
    }
    return std::pair{pr / count, roc / count};
  };
  const auto [s_pr, s_roc] = average(GraphKind::ER, 10, 10, PermMode::Sinkhorn);
  const auto [t_pr, t_roc] = average(GraphKind::ER, 10, 10, PermMode::TopK);
  const auto [sf_pr, sf_roc] = average(GraphKind::SF, 20, 20, PermMode::TopK);
  const bool pass = s_pr >= 0.95 && s_roc >= 0.97 && t_pr >= 0.95 && t_roc >= 0.97 && sf_roc >= 0.90;
  return {pass, fmt("ER-10-10 sinkhorn PR %.3f ROC %.3f, topk PR %.3f ROC %.3f; SF-20-20 topk ROC %.3f "
                    "(10 graphs x 4 lrs, 3000 steps, %.0f s)",
                    s_pr, s_roc, t_pr, t_roc, sf_roc, seconds_since(t0))};
}

// --- criteria 3, 8, 9 ----------------------------------------------------------

struct Run {
  SemDataset data;
  FitResult fit;
  MetricsReport report;
};

std::vector<Run> structure_runs(double& seconds) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Run> runs;
  for (std::uint64_t s = 0; s < 3; ++s) {
    GenSpec g;
    g.seed = s;
    TrainConfig cfg;
    cfg.seed = s;
    Run r;
    r.data = generate_dataset(g);
    r.fit = fit(r.data, cfg);
    r.report = evaluate(r.fit, r.data);
    runs.push_back(std::move(r));
  }
  seconds = seconds_since(t0);
  return runs;
}

Outcome structure_recovery(const std::vector<Run>& runs, double seconds) {
  double roc = 0.0, pr = 0.0;
  std::string per;
  for (const Run& r : runs) {
    roc += r.report.aucs.un_auc_roc;
    pr += r.report.aucs.un_auc_pr;
    per += fmt(" %.3f/%.3f", r.report.aucs.un_auc_roc, r.report.aucs.un_auc_pr);
  }
  roc /= runs.size();
  pr /= runs.size();
  return {roc >= 0.85 && pr >= 0.65 && seconds <= 600.0,
          fmt("3 ER-10-10 datasets, Gumbel-Top-k: mean Un-AUC-ROC %.3f, Un-AUC-PR %.3f (per run ROC/PR:%s) in %.0f s",
              roc, pr, per.c_str(), seconds)};
}

Outcome perturbation(const std::vector<Run>& runs) {
  const std::vector<std::size_t> ks{0, 2, 4, 8};
  std::vector<double> mean(ks.size(), 0.0);
  std::string per;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    per += " [";
    for (std::size_t i = 0; i < ks.size(); ++i) {
      const double c = perturbation_confidence(runs[r].fit.model, runs[r].data.truth, ks[i], 100, 7 + r).mean;
      mean[i] += c / runs.size();
      per += fmt(i ? " %.3f" : "%.3f", c);
    }
    per += "]";
  }
  bool decreasing = true;
  for (std::size_t i = 1; i < ks.size(); ++i) decreasing = decreasing && mean[i] < mean[i - 1];
  return {decreasing, fmt("mean relative confidence at k=0,2,4,8: %.3f %.3f %.3f %.3f (per run%s)", mean[0], mean[1],
                          mean[2], mean[3], per.c_str())};
}

Outcome threshold_sweep(const std::vector<Run>& runs) {
  bool pass = true;
  std::string per;
  for (const Run& r : runs) {
    const Tensor x = r.data.rows(r.data.split.test);
    double lo = INFINITY, hi = 0.0;
    for (double t : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8}) {
      const double mse = mechanism_mse(x, predict(r.fit, x, t));
      lo = std::min(lo, mse);
      hi = std::max(hi, mse);
    }
    const double at_half = mechanism_mse(x, predict(r.fit, x, 0.5));
    const double at_095 = mechanism_mse(x, predict(r.fit, x, 0.95));
    const double spread = (hi - lo) / lo;
    pass = pass && spread < 0.2 && at_095 > at_half;
    per += fmt(" [spread %.1f%%, mse@0.5 %.3f, mse@0.95 %.3f]", 100 * spread, at_half, at_095);
  }
  return {pass, "MSE over t in 0.1..0.8 and at 0.95 per run:" + per};
}

// --- criterion 4 ---------------------------------------------------------------

Outcome sampling_time() {
  const auto rows = bench_sweep({10, 25, 50, 100, 200}, {PermMode::Sinkhorn, PermMode::TopK}, 30, 0);
  auto at = [&](std::size_t n, PermMode mode) {
    for (const auto& r : rows)
      if (r.n == n && r.mode == mode) return r.seconds;
    throw ContractError("missing bench row");
  };
  const MeanSd s200 = at(200, PermMode::Sinkhorn), t200 = at(200, PermMode::TopK);
  const double slope_s = loglog_slope(rows, PermMode::Sinkhorn), slope_t = loglog_slope(rows, PermMode::TopK);
  const bool pass = s200.mean < 1.0 && t200.mean < 1.0 && t200.mean < s200.mean && slope_s > slope_t &&
                    at(10, PermMode::Sinkhorn).mean < s200.mean && at(10, PermMode::TopK).mean < t200.mean;
  return {pass, fmt("n=200 mean sinkhorn %.4f s, topk %.4f s; log-log slope sinkhorn %.2f, topk %.2f "
                    "(difference %+.2f, O(n^3) vs O(n^2) would give about +1)",
                    s200.mean, t200.mean, slope_s, slope_t, slope_s - slope_t)};
}

// --- criterion 5 ---------------------------------------------------------------

Outcome oracles_hold() {
  std::vector<std::string> failed;
  std::string detail;

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::size_t hung_ok = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + trial % 7;
    Tensor p(n, n);
    for (double& v : p.data()) v = u(rng);
    if (oracles::assignment_value(p, hungarian_assignment(p)) == oracles::brute_force_best(p)) ++hung_ok;
  }
  detail += fmt("hungarian %zu/1000 exact", hung_ok);
  if (hung_ok != 1000) failed.push_back("hungarian");

  std::size_t auc_checked = 0, auc_ok = 0;
  std::uniform_int_distribution<int> level(0, 9);
  for (int instance = 0; instance < 1000; ++instance) {
    const AdjacencyMatrix truth = oracles::random_dag(6, 0.35, rng);
    Tensor s(6, 6);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j)
        if (i != j) s(i, j) = level(rng) / 10.0;
    for (const PairUniverse& pu : {directed_pairs(s, truth), undirected_pairs(s, truth)}) {
      const auto pos = std::count(pu.labels.begin(), pu.labels.end(), 1);
      if (pos == 0 || pos == static_cast<long>(pu.labels.size())) continue;
      ++auc_checked;
      if (std::abs(auc_roc(pu.scores, pu.labels) - oracles::roc_by_threshold_sweep(pu.scores, pu.labels)) <= 1e-12 &&
          std::abs(auc_pr(pu.scores, pu.labels) - oracles::pr_by_threshold_sweep(pu.scores, pu.labels)) <= 1e-12)
        ++auc_ok;
    }
  }
  detail += fmt("; AUC %zu/%zu exact", auc_ok, auc_checked);
  if (auc_ok != auc_checked) failed.push_back("auc");

  double kl_err = 0.0;
  for (int k = 0; k <= 1000; ++k)
    for (double p : {0.01, 0.05, 0.1}) {
      const double q = k / 1000.0;
      kl_err = std::max(kl_err, std::abs(bernoulli_kl(q, p) - oracles::bernoulli_kl_two_term(q, p)));
    }
  detail += fmt("; KL max error %.1e", kl_err);
  if (kl_err > 1e-10) failed.push_back("kl");

  std::size_t dags = 0, round_trips = 0;
  for (std::uint32_t c = 0; c < (1u << 12); ++c) {
    const BinaryMatrix m = oracles::matrix_from_code(4, c);
    if (!is_acyclic(m)) continue;
    ++dags;
    const AdjacencyMatrix a(m);
    const auto [pi, up] = decompose(a);
    if (compose(pi, up) == a) ++round_trips;
  }
  detail += fmt("; compose/decompose %zu/%zu", round_trips, dags);
  if (dags != 543 || round_trips != 543) failed.push_back("compose");

  // twenty iterations at tau = 1, entries in [-5, 5]
  std::size_t sk_total = 0, sk_ok = 0;
  double sk_worst = 0.0, sk_worst_long = 0.0;
  for (std::size_t n : {2u, 3u, 5u, 10u, 20u, 50u}) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const Tensor m = testing::random_tensor(n, n, 7919 * n + seed, -5, 5);
      const double dev = oracles::max_line_deviation(sinkhorn_operator(m, 20, 1.0));
      sk_worst = std::max(sk_worst, dev);
      sk_worst_long = std::max(sk_worst_long, oracles::max_line_deviation(sinkhorn_operator(m, 5000, 1.0)));
      ++sk_total;
      if (dev <= 1e-4) ++sk_ok;
    }
  }
  detail += fmt("; sinkhorn (20 iterations) %zu/%zu within 1e-4, worst %.1e (worst after 5000 iterations %.1e)", sk_ok,
                sk_total, sk_worst, sk_worst_long);
  if (sk_ok != sk_total) failed.push_back("sinkhorn");

  if (!failed.empty()) {
    std::string names;
    for (const auto& f : failed) names += (names.empty() ? "" : ", ") + f;
    detail += " -- failing: " + names;
  }
  return {failed.empty(), detail};
}

// --- criterion 6 ---------------------------------------------------------------

Outcome gradient_checks() {
  double worst = 0.0;
  std::string worst_name;
  const auto errors = oracles::op_gradcheck_errors();
  for (const auto& [name, err] : errors)
    if (err >= worst) {
      worst = err;
      worst_name = name;
    }
  const double elbo_topk = oracles::elbo_gradcheck(PermMode::TopK);
  const double elbo_sinkhorn = oracles::elbo_gradcheck(PermMode::Sinkhorn);
  return {worst < 1e-3 && elbo_topk < 1e-3 && elbo_sinkhorn < 1e-3,
          fmt("%zu ops, worst relative error %.1e (%s); full ELBO n=5 h=8: topk %.1e, sinkhorn %.1e", errors.size(),
              worst, worst_name.c_str(), elbo_topk, elbo_sinkhorn)};
}

// --- criterion 7 ---------------------------------------------------------------

Outcome distributions() {
  PermutationParams params;
  params.mode = PermMode::TopK;
  params.scores = Tensor(1, 3);
  GumbelSource noise(123);
  std::map<std::vector<std::size_t>, int> counts;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) counts[sample_permutation(params, &noise).hard.perm()]++;
  double perm_dev = 0.0;
  for (const auto& [perm, c] : counts) perm_dev = std::max(perm_dev, std::abs(double(c) / draws - 1.0 / 6.0));

  EdgeParams zero{Tensor(10, 10), 1.0};
  std::size_t on = 0, total = 0;
  for (int i = 0; i < 2000; ++i) {
    const BinaryMatrix e = sample_edges(zero, &noise).hard;
    for (std::size_t a = 0; a < 10; ++a)
      for (std::size_t b = 0; b < 10; ++b)
        if (a != b) {
          on += e(a, b);
          ++total;
        }
  }
  const double freq = double(on) / total;
  return {counts.size() == 6 && perm_dev <= 0.01 && std::abs(freq - 0.5) <= 0.01,
          fmt("top-k n=3: %zu permutations, max |freq - 1/6| %.4f over 1e5 draws; zero-logit edge frequency %.4f",
              counts.size(), perm_dev, freq)};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* title, const std::function<Outcome()>& run) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("criterion %d: %s  %s: %s [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", title, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  };

  report(1, "any-time DAG validity", any_time_validity);
  report(2, "direct DAG learning", direct_learning);
  double train_seconds = 0.0;
  std::vector<Run> runs;
  report(3, "structure recovery", [&] {
    runs = structure_runs(train_seconds);
    return structure_recovery(runs, train_seconds);
  });
  report(4, "sampling time", sampling_time);
  report(5, "oracle equivalences", oracles_hold);
  report(6, "gradient checks", gradient_checks);
  report(7, "distributional checks", distributions);
  report(8, "perturbation confidence", [&] {
    if (runs.empty()) return Outcome{false, "no structure-recovery runs"};
    return perturbation(runs);
  });
  report(9, "threshold insensitivity", [&] {
    if (runs.empty()) return Outcome{false, "no structure-recovery runs"};
    return threshold_sweep(runs);
  });
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
