// dpdag: generate | train | eval | bench | direct | grid

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dpdag/errors.hpp"
#include "dpdag/experiment.hpp"

namespace fs = std::filesystem;
using namespace dpdag;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<PermMode> parse_modes(const std::vector<std::string>& names) {
  std::vector<PermMode> out;
  for (const auto& s : names) out.push_back(parse_perm_mode(s));
  return out;
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

struct TrainFlags {
  std::string config_path;
  std::string perm_mode;
  std::optional<double> lr, prior, lambda, tau;
  std::optional<std::size_t> hidden, batch, epochs, patience, dag_samples;
  std::optional<std::uint64_t> seed;

  void add_to(CLI::App* app) {
    app->add_option("--config", config_path, "TrainConfig JSON; flags override its fields");
    app->add_option("--perm-mode", perm_mode, "Permutation sampler")->check(CLI::IsMember({"topk", "sinkhorn"}));
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--prior", prior, "Bernoulli edge prior p in [0.01, 0.1]");
    app->add_option("--lambda", lambda, "KL weight in [0, 0.1]");
    app->add_option("--tau", tau, "Gumbel temperature");
    app->add_option("--hidden", hidden, "Mechanism hidden width");
    app->add_option("--batch", batch, "Minibatch size");
    app->add_option("--epochs", epochs, "Maximum epochs");
    app->add_option("--patience", patience, "Early-stopping patience in validation checks");
    app->add_option("--dag-samples", dag_samples, "DAG samples per step");
    app->add_option("--seed", seed, "Run seed");
  }

  TrainConfig resolve() const {
    TrainConfig c;
    if (!config_path.empty()) c = train_config_from_json(read_json_file(config_path));
    if (!perm_mode.empty()) c.perm_mode = parse_perm_mode(perm_mode);
    if (lr) c.learning_rate = *lr;
    if (prior) c.prior_p = *prior;
    if (lambda) c.lambda = *lambda;
    if (tau) c.tau = *tau;
    if (hidden) c.hidden = *hidden;
    if (batch) c.batch_size = *batch;
    if (epochs) c.max_epochs = *epochs;
    if (patience) c.patience = *patience;
    if (dag_samples) c.dag_samples = *dag_samples;
    if (seed) c.seed = *seed;
    try {
      c.validate();
    } catch (const ParameterError& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable DAG sampling and variational structure learning"};
  app.set_version_flag("--version", library_version());
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Generate synthetic SEM datasets");
  std::string gen_kind = "er";
  std::size_t gen_n = 10, gen_m = 10, gen_samples = 1000, gen_seeds = 1;
  std::uint64_t gen_seed0 = 0;
  double gen_noise = 1.0, gen_bw = 1.0;
  bool gen_raw = false;
  std::string gen_out;
  gen->add_option("--kind", gen_kind, "Graph family")->check(CLI::IsMember({"er", "sf"}));
  gen->add_option("--n", gen_n, "Number of nodes");
  gen->add_option("--m", gen_m, "Expected number of edges");
  gen->add_option("--N", gen_samples, "Samples per dataset");
  gen->add_option("--seeds", gen_seeds, "Number of datasets (seeds first-seed, first-seed+1, ...)");
  gen->add_option("--first-seed", gen_seed0, "First seed");
  gen->add_option("--noise-std", gen_noise, "Additive noise standard deviation");
  gen->add_option("--bandwidth", gen_bw, "RBF kernel bandwidth");
  gen->add_flag("--raw", gen_raw, "Skip column standardization");
  gen->add_option("--out", gen_out, "Output directory (default $DPDAG_OUTPUT_ROOT/datasets)");

  // train
  auto* train = app.add_subcommand("train", "Fit VI-DP-DAG to a dataset");
  std::string train_data, train_out;
  TrainFlags train_flags;
  train->add_option("--data", train_data, "Dataset directory")->required();
  train->add_option("--out", train_out, "Output directory (default $DPDAG_OUTPUT_ROOT/train/<dataset>)");
  train_flags.add_to(train);

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  std::string eval_model, eval_data, eval_out;
  std::uint64_t eval_seed = 0;
  EvalOptions eval_opts;
  eval->add_option("--model", eval_model, "model.json written by train")->required();
  eval->add_option("--data", eval_data, "Dataset directory")->required();
  eval->add_option("--out", eval_out, "Directory for metrics.json and metrics.csv (default: next to the model)");
  eval->add_option("--shd-thresholds", eval_opts.shd_thresholds, "Edge-probability thresholds for SHD");
  eval->add_option("--mse-threshold", eval_opts.mse_threshold, "Threshold of the DAG used for MSE");
  eval->add_option("--seed", eval_seed, "Seed of the timing samples");

  // bench
  auto* bench = app.add_subcommand("bench", "Time hard DAG sampling over a range of sizes");
  std::vector<std::size_t> bench_ns{10, 25, 50, 100, 200};
  std::vector<std::string> bench_modes{"sinkhorn", "topk"};
  std::size_t bench_reps = 30;
  std::uint64_t bench_seed = 0;
  std::string bench_out;
  bench->add_option("--ns", bench_ns, "Node counts");
  bench->add_option("--modes", bench_modes, "Permutation samplers")->check(CLI::IsMember({"topk", "sinkhorn"}));
  bench->add_option("--reps", bench_reps, "Timed samples per size");
  bench->add_option("--seed", bench_seed, "Seed");
  bench->add_option("--out", bench_out, "CSV path (default stdout)");

  // direct
  auto* direct = app.add_subcommand("direct", "Fit a DP-DAG directly to an observed adjacency");
  std::string direct_truth, direct_kind = "er", direct_mode = "topk", direct_out;
  std::size_t direct_n = 10, direct_m = 10, direct_steps = 3000;
  std::uint64_t direct_seed = 0;
  std::vector<double> direct_lrs{1.0, 0.1, 0.01, 0.001};
  direct->add_option("--truth", direct_truth, "Edge list file (else a graph is generated)");
  direct->add_option("--kind", direct_kind, "Generated graph family")->check(CLI::IsMember({"er", "sf"}));
  direct->add_option("--n", direct_n, "Number of nodes");
  direct->add_option("--m", direct_m, "Expected number of edges of a generated graph");
  direct->add_option("--perm-mode", direct_mode, "Permutation sampler")->check(CLI::IsMember({"topk", "sinkhorn"}));
  direct->add_option("--lrs", direct_lrs, "Learning rates");
  direct->add_option("--steps", direct_steps, "Optimization steps");
  direct->add_option("--seed", direct_seed, "Seed");
  direct->add_option("--out", direct_out, "CSV path (default stdout)");

  // grid
  auto* grid = app.add_subcommand("grid", "Grid search over sampler, prior and KL weight");
  std::string grid_data, grid_out;
  std::vector<std::string> grid_modes{"sinkhorn", "topk"};
  GridAxes axes;
  std::size_t grid_workers = 2;
  TrainFlags grid_flags;
  grid->add_option("--data", grid_data, "Dataset directory")->required();
  grid->add_option("--modes", grid_modes, "Permutation samplers")->check(CLI::IsMember({"topk", "sinkhorn"}));
  grid->add_option("--priors", axes.priors, "Edge priors");
  grid->add_option("--lambdas", axes.lambdas, "KL weights");
  grid->add_option("--workers", grid_workers, "Concurrent runs");
  grid->add_option("--out", grid_out, "Directory for grid.json (default $DPDAG_OUTPUT_ROOT/grid/<dataset>)");
  grid_flags.add_to(grid);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) {
      GenSpec spec;
      spec.kind = parse_graph_kind(gen_kind);
      spec.n = gen_n;
      spec.m = gen_m;
      spec.samples = gen_samples;
      spec.noise_std = gen_noise;
      spec.bandwidth = gen_bw;
      spec.standardize = !gen_raw;
      std::vector<std::uint64_t> seeds;
      for (std::size_t k = 0; k < gen_seeds; ++k) seeds.push_back(gen_seed0 + k);
      const fs::path out = gen_out.empty() ? default_output_root() / "datasets" : fs::path(gen_out);
      for (const auto& d : generate_datasets(spec, seeds, out)) std::cout << d.string() << "\n";
    } else if (*train) {
      const TrainConfig cfg = train_flags.resolve();
      const fs::path out = train_out.empty()
                               ? default_output_root() / "train" / fs::path(train_data).filename()
                               : fs::path(train_out);
      const FitResult r = train_run(train_data, cfg, out);
      std::printf("%s best_epoch=%zu best_val_loss=%.6g epochs=%zu seconds=%.3f%s\n",
                  (out / "model.json").string().c_str(), r.best_epoch, r.best_val_loss, r.history.size(),
                  r.wall_time_seconds, r.diverged ? " diverged" : "");
    } else if (*eval) {
      const nlohmann::json ckpt = read_json_file(eval_model);
      const FitResult fit_result = fit_from_json(ckpt);
      const SemDataset data = load_dataset(eval_data);
      eval_opts.seed = eval_seed;
      MetricsReport report = evaluate(fit_result, data, eval_opts);
      nlohmann::json spec = {{"model", eval_model}, {"dataset", eval_data},
                             {"shd_thresholds", eval_opts.shd_thresholds}, {"mse_threshold", eval_opts.mse_threshold}};
      const fs::path out = eval_out.empty() ? fs::path(eval_model).parent_path() : fs::path(eval_out);
      write_metrics(out.empty() ? fs::path(".") : out, report, spec, eval_seed);
      std::cout << to_json(report).dump(2) << "\n";
    } else if (*bench) {
      const auto rows = bench_sweep(bench_ns, parse_modes(bench_modes), bench_reps, bench_seed);
      if (bench_out.empty()) {
        write_bench_csv(std::cout, rows);
      } else {
        const fs::path p(bench_out);
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        std::ofstream f(p);
        write_bench_csv(f, rows);
        f.close();
        record_artifact(p.parent_path().empty() ? fs::path(".") : p.parent_path(), p.filename().string(),
                        {{"ns", bench_ns}, {"modes", bench_modes}, {"reps", bench_reps}}, bench_seed);
      }
    } else if (*direct) {
      AdjacencyMatrix truth;
      if (!direct_truth.empty()) {
        truth = read_edge_list_file(direct_truth, direct_n);
      } else {
        GenSpec g;
        g.kind = parse_graph_kind(direct_kind);
        g.n = direct_n;
        g.m = direct_m;
        g.seed = direct_seed;
        truth = gen_graph(g);
      }
      const auto rows = direct_runs(truth, parse_perm_mode(direct_mode), direct_lrs, direct_steps, direct_seed);
      if (direct_out.empty()) {
        write_direct_csv(std::cout, rows);
      } else {
        const fs::path p(direct_out);
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        std::ofstream f(p);
        write_direct_csv(f, rows);
        f.close();
        record_artifact(p.parent_path().empty() ? fs::path(".") : p.parent_path(), p.filename().string(),
                        {{"truth", direct_truth}, {"kind", direct_kind}, {"n", direct_n}, {"m", direct_m},
                         {"perm_mode", direct_mode}, {"lrs", direct_lrs}, {"steps", direct_steps}},
                        direct_seed);
      }
    } else if (*grid) {
      const TrainConfig base = grid_flags.resolve();
      axes.perm_modes = parse_modes(grid_modes);
      for (double p : axes.priors)
        if (!(p >= 1e-2 && p <= 1e-1)) throw UsageError("--priors values must lie in [0.01, 0.1]");
      for (double l : axes.lambdas)
        if (!(l >= 0.0 && l <= 1e-1)) throw UsageError("--lambdas values must lie in [0, 0.1]");
      const SemDataset data = load_dataset(grid_data);
      const GridResult g = grid_search(data, base, axes, grid_workers);
      const fs::path out =
          grid_out.empty() ? default_output_root() / "grid" / fs::path(grid_data).filename() : fs::path(grid_out);
      fs::create_directories(out);
      const nlohmann::json report = to_json(g);
      std::ofstream(out / "grid.json") << report.dump(2) << "\n";
      nlohmann::json spec = to_json(base);
      spec["modes"] = grid_modes;
      spec["priors"] = axes.priors;
      spec["lambdas"] = axes.lambdas;
      spec["dataset"] = grid_data;
      record_artifact(out, "grid.json", spec, base.seed);
      std::cout << report["best_config"].dump() << "\n";
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "dpdag: usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "dpdag: error: %s\n", e.what());
    return 1;
  }
  return 0;
}
