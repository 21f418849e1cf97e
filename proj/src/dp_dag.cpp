#include "dpdag/dp_dag.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "dpdag/errors.hpp"

namespace dpdag {

namespace {
constexpr int kCheckpointVersion = 1;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}
}  // namespace

void DpDagModel::validate() const {
  edges.validate();
  perm.validate();
  if (perm.n() != edges.n()) {
    throw DimensionError("dp-dag model: edge params for n=" + std::to_string(edges.n()) +
                         " but permutation params for n=" + std::to_string(perm.n()));
  }
}

DpDagModel DpDagModel::initial(std::size_t n, PermMode mode, double tau, std::uint64_t seed, double score_std) {
  DpDagModel m;
  m.edges.logits = Tensor(n, n);
  m.edges.tau = tau;
  m.perm.mode = mode;
  m.perm.tau = tau;
  m.perm.scores = mode == PermMode::Sinkhorn ? Tensor(n, n) : Tensor(1, n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, score_std);
  for (double& v : m.perm.scores.data()) v = normal(rng);
  m.validate();
  return m;
}

Tensor order_mask(const PermutationMatrix& pi) {
  const std::size_t n = pi.n();
  Tensor m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(i, j) = pi[i] < pi[j] ? 1.0 : 0.0;
  return m;
}

DagSample sample_dag(const DpDagModel& model, GumbelSource* noise) {
  model.validate();
  PermutationSample p = sample_permutation(model.perm, noise);
  EdgeSample e = sample_edges(model.edges, noise);
  const std::size_t n = model.n();
  BinaryMatrix hard(n);
  Tensor soft(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (p.hard[i] < p.hard[j]) {
        hard.set(i, j, e.hard(i, j));
        soft(i, j) = e.soft(i, j);
      }
    }
  }
  return {AdjacencyMatrix(std::move(hard)), std::move(soft), std::move(p.hard)};
}

ad::Var sample_dag(ad::Var logits, ad::Var scores, const DpDagModel& model, GumbelSource* noise, Estimator est,
                   DagSample* hard_out) {
  model.validate();
  ad::Tape& t = *logits.tape;
  const std::size_t n = model.n();
  PermutationMatrix pi;
  BinaryMatrix edge_hard;
  ad::Var perm = sample_permutation(scores, model.perm, noise, est, &pi);
  ad::Var edges = sample_edges(logits, model.edges.tau, noise, est, &edge_hard);

  Tensor upper(n, n), off_diagonal(n, n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    off_diagonal(i, i) = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) upper(i, j) = 1.0;
  }
  ad::Var mask = ad::matmul(ad::transpose(perm), ad::matmul(t.constant(std::move(upper)), perm));
  ad::Var dag = ad::mul(ad::mul(edges, mask), t.constant(std::move(off_diagonal)));

  if (hard_out != nullptr) {
    const Tensor& edge_soft = est == Estimator::StraightThrough ? t.value(t.inputs(edges.id).front()) : edges.value();
    BinaryMatrix hard(n);
    Tensor soft(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (pi[i] < pi[j]) {
          hard.set(i, j, edge_hard(i, j));
          soft(i, j) = edge_soft(i, j);
        }
    hard_out->hard = AdjacencyMatrix(std::move(hard));
    hard_out->soft = std::move(soft);
    hard_out->perm = std::move(pi);
  }
  return dag;
}

PermutationMatrix deterministic_permutation(const DpDagModel& model) {
  return sample_permutation(model.perm, nullptr).hard;
}

EdgeScores edge_scores(const DpDagModel& model) {
  model.validate();
  const PermutationMatrix pi = deterministic_permutation(model);
  const std::size_t n = model.n();
  EdgeScores s{Tensor(n, n), Tensor(n, n)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (pi[i] < pi[j]) s.directed(i, j) = sigmoid(model.edges.logits(i, j));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s.undirected(i, j) = s.directed(i, j) + s.directed(j, i);
  return s;
}

AdjacencyMatrix threshold_dag(const DpDagModel& model, double t) {
  if (!(t > 0.0 && t < 1.0)) throw ParameterError("threshold_dag: threshold must lie in (0,1)");
  return AdjacencyMatrix(BinaryMatrix::from_tensor(edge_scores(model).directed, t));
}

nlohmann::json tensor_to_json(const Tensor& t) {
  return {{"rows", t.rows()}, {"cols", t.cols()}, {"data", std::vector<double>(t.data().begin(), t.data().end())}};
}

Tensor tensor_from_json(const nlohmann::json& j) {
  return Tensor(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("data").get<std::vector<double>>());
}

nlohmann::json model_to_json(const DpDagModel& model) {
  return {{"format", "dpdag-model"},
          {"version", kCheckpointVersion},
          {"n", model.n()},
          {"perm_mode", to_string(model.perm.mode)},
          {"edge_tau", model.edges.tau},
          {"perm_tau", model.perm.tau},
          {"sinkhorn_iters", model.perm.sinkhorn_iters},
          {"sinkhorn_tol", model.perm.sinkhorn_tol},
          {"logits", tensor_to_json(model.edges.logits)},
          {"scores", tensor_to_json(model.perm.scores)}};
}

DpDagModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "dpdag-model") throw ParseError("checkpoint: wrong format tag");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) throw ParseError("checkpoint: unsupported version " + std::to_string(version));
    DpDagModel m;
    m.edges.logits = tensor_from_json(j.at("logits"));
    m.edges.tau = j.at("edge_tau").get<double>();
    m.perm.mode = parse_perm_mode(j.at("perm_mode").get<std::string>());
    m.perm.tau = j.at("perm_tau").get<double>();
    m.perm.sinkhorn_iters = j.at("sinkhorn_iters").get<int>();
    m.perm.sinkhorn_tol = j.at("sinkhorn_tol").get<double>();
    m.perm.scores = tensor_from_json(j.at("scores"));
    m.validate();
    if (m.n() != j.at("n").get<std::size_t>()) throw ParseError("checkpoint: n does not match tensors");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

void save_model(const std::string& path, const DpDagModel& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out << model_to_json(model).dump(2) << '\n';
}

DpDagModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint '" + path + "': " + e.what());
  }
  return model_from_json(j);
}

}  // namespace dpdag
