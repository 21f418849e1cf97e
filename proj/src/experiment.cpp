#include "dpdag/experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>

#include "dpdag/errors.hpp"

namespace dpdag {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

const char* library_version() { return "0.1.0"; }

std::string spec_hash(const nlohmann::json& spec) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : spec.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

fs::path default_output_root() {
  const char* env = std::getenv("DPDAG_OUTPUT_ROOT");
  if (env != nullptr && *env != '\0') return env;
  return "runs";
}

void record_artifact(const fs::path& dir, const std::string& artifact, const nlohmann::json& spec,
                     std::uint64_t seed) {
  const fs::path path = dir / "manifest.json";
  nlohmann::json m = {{"artifacts", nlohmann::json::object()}};
  if (fs::exists(path)) {
    try {
      m = nlohmann::json::parse(read_text(path));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("manifest " + path.string() + ": " + e.what());
    }
  }
  m["artifacts"][artifact] = {
      {"spec_hash", spec_hash(spec)}, {"seed", seed}, {"library_version", library_version()}, {"spec", spec}};
  write_text(path, m.dump(2) + "\n");
}

std::vector<fs::path> generate_datasets(GenSpec base, const std::vector<std::uint64_t>& seeds,
                                        const fs::path& out_dir) {
  if (seeds.empty()) throw ParameterError("generate: no seeds given");
  std::vector<fs::path> dirs;
  for (std::uint64_t seed : seeds) {
    base.seed = seed;
    base.validate();
    const fs::path dir = out_dir / (base.label() + "-s" + std::to_string(seed));
    fs::create_directories(dir);
    save_dataset(dir.string(), generate_dataset(base));
    const nlohmann::json spec = to_json(base);
    for (const char* f : {"data.csv", "truth.edges", "meta.json"}) record_artifact(dir, f, spec, seed);
    dirs.push_back(dir);
  }
  return dirs;
}

FitResult train_run(const fs::path& dataset_dir, const TrainConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  const SemDataset data = load_dataset(dataset_dir.string());
  FitResult fit_result = fit(data, cfg);
  fs::create_directories(out_dir);
  nlohmann::json ckpt = fit_to_json(fit_result);
  ckpt["train_config"] = to_json(cfg);
  ckpt["dataset"] = data.name;
  write_text(out_dir / "model.json", ckpt.dump(2) + "\n");
  std::ofstream hist(out_dir / "history.csv");
  write_history_csv(hist, fit_result.history);
  hist.close();
  nlohmann::json spec = to_json(cfg);
  spec["dataset"] = fs::absolute(dataset_dir).lexically_normal().string();
  record_artifact(out_dir, "model.json", spec, cfg.seed);
  record_artifact(out_dir, "history.csv", spec, cfg.seed);
  return fit_result;
}

MetricsReport evaluate(const FitResult& fit_result, const SemDataset& data, const EvalOptions& opts) {
  if (fit_result.model.n() != data.n()) throw DimensionError("evaluate: model and dataset differ in size");
  MetricsReport r;
  r.dataset = data.name;
  r.seed = opts.seed;
  r.aucs = structure_aucs(edge_scores(fit_result.model).directed, data.truth);
  for (double t : opts.shd_thresholds) r.shd_at.emplace_back(t, shd(threshold_dag(fit_result.model, t), data.truth));
  const std::vector<std::size_t>& rows = data.split.test.empty() ? data.split.val : data.split.test;
  const Tensor x = data.rows(rows);
  r.mse = mechanism_mse(x, predict(fit_result, x, opts.mse_threshold));
  r.train_seconds = fit_result.wall_time_seconds;
  r.sample_seconds = bench_sampling(fit_result.model, opts.sample_repetitions, opts.seed).mean;
  return r;
}

void write_metrics(const fs::path& out_dir, const MetricsReport& report, const nlohmann::json& spec,
                   std::uint64_t seed) {
  fs::create_directories(out_dir);
  write_text(out_dir / "metrics.json", to_json(report).dump(2) + "\n");
  write_text(out_dir / "metrics.csv", csv_header(report) + "\n" + csv_row(report) + "\n");
  record_artifact(out_dir, "metrics.json", spec, seed);
  record_artifact(out_dir, "metrics.csv", spec, seed);
}

std::vector<BenchRow> bench_sweep(const std::vector<std::size_t>& ns, const std::vector<PermMode>& modes,
                                  std::size_t repetitions, std::uint64_t seed) {
  std::vector<BenchRow> rows;
  for (std::size_t n : ns)
    for (PermMode mode : modes) {
      const DpDagModel model = DpDagModel::initial(n, mode, 1.0, seed, 1.0);
      rows.push_back({n, mode, bench_sampling(model, repetitions, seed)});
    }
  return rows;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "n,perm_mode,mean_seconds,sd_seconds,median_seconds\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%s,%.9g,%.9g,%.9g\n", r.n, to_string(r.mode).c_str(), r.seconds.mean,
                  r.seconds.sd, r.seconds.median);
    out << buf;
  }
}

double loglog_slope(const std::vector<BenchRow>& rows, PermMode mode) {
  std::vector<double> xs, ys;
  for (const auto& r : rows)
    if (r.mode == mode && r.seconds.median > 0.0) {
      xs.push_back(std::log(static_cast<double>(r.n)));
      ys.push_back(std::log(r.seconds.median));
    }
  if (xs.size() < 2) throw ParameterError("loglog_slope: need at least two sizes");
  const double mx = mean_sd(xs).mean, my = mean_sd(ys).mean;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sxy += (xs[k] - mx) * (ys[k] - my);
    sxx += (xs[k] - mx) * (xs[k] - mx);
  }
  return sxy / sxx;
}

std::vector<DirectRow> direct_runs(const AdjacencyMatrix& truth, PermMode mode, const std::vector<double>& lrs,
                                   std::size_t steps, std::uint64_t seed) {
  std::vector<DirectRow> rows;
  for (double lr : lrs) {
    DirectFitOptions opts;
    opts.learning_rate = lr;
    opts.steps = steps;
    opts.seed = seed;
    const DpDagModel fitted = fit_direct(truth, DpDagModel::initial(truth.n(), mode, 1.0, seed), opts);
    rows.push_back({mode, lr, structure_aucs(edge_scores(fitted).directed, truth)});
  }
  return rows;
}

void write_direct_csv(std::ostream& out, const std::vector<DirectRow>& rows) {
  out << "perm_mode,learning_rate,dir_auc_pr,dir_auc_roc,un_auc_pr,un_auc_roc\n";
  char buf[192];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%g,%.10g,%.10g,%.10g,%.10g\n", to_string(r.mode).c_str(), r.learning_rate,
                  r.aucs.dir_auc_pr, r.aucs.dir_auc_roc, r.aucs.un_auc_pr, r.aucs.un_auc_roc);
    out << buf;
  }
}

GridResult grid_search(const SemDataset& data, const TrainConfig& base, const GridAxes& axes, std::size_t workers) {
  GridResult g;
  for (PermMode mode : axes.perm_modes)
    for (double p : axes.priors)
      for (double lambda : axes.lambdas) {
        GridEntry e;
        e.config = base;
        e.config.perm_mode = mode;
        e.config.prior_p = p;
        e.config.lambda = lambda;
        e.config.validate();
        g.entries.push_back(e);
      }
  if (g.entries.empty()) throw ParameterError("grid: empty search space");
  workers = std::max<std::size_t>(1, std::min(workers, g.entries.size()));

  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (std::size_t k = next++; k < g.entries.size(); k = next++) {
      try {
        GridEntry& e = g.entries[k];
        const FitResult r = fit(data, e.config);
        Learnables params = Learnables::initial(data.n(), e.config);
        params.logits.value = r.model.edges.logits;
        params.scores.value = r.model.perm.scores;
        params.mechanisms = r.mechanisms;
        const auto [recon, full] = validation_loss(data.rows(data.split.val), params, e.config);
        e.val_reconstruction = recon;
        e.val_loss = full;
        e.wall_time_seconds = r.wall_time_seconds;
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  for (std::size_t k = 1; k < g.entries.size(); ++k)
    if (g.entries[k].val_reconstruction < g.entries[g.best].val_reconstruction) g.best = k;
  return g;
}

nlohmann::json to_json(const GridResult& g) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& e : g.entries)
    runs.push_back({{"config", to_json(e.config)},
                    {"val_reconstruction", e.val_reconstruction},
                    {"val_loss", e.val_loss},
                    {"wall_time_seconds", e.wall_time_seconds}});
  return {{"runs", runs}, {"best_index", g.best}, {"best_config", to_json(g.entries[g.best].config)},
          {"selection", "lowest validation reconstruction loss"}};
}

}  // namespace dpdag
