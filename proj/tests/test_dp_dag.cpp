#include <cmath>
#include <fstream>

#include "doctest.h"
#include "dpdag/dp_dag.hpp"
#include "dpdag/errors.hpp"
#include "support.hpp"

using namespace dpdag;
using testing::random_tensor;

namespace {

DpDagModel random_model(std::size_t n, PermMode mode, std::uint64_t seed) {
  DpDagModel m = DpDagModel::initial(n, mode, 1.0, seed, 1.0);
  m.edges.logits = random_tensor(n, n, seed + 1, -3, 3);
  return m;
}

}  // namespace

TEST_CASE("order mask is Pi^T M Pi with M strictly upper triangular") {
  const PermutationMatrix pi({1, 3, 0, 2});
  const Tensor mask = order_mask(pi);
  const Tensor P = pi.matrix();
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < 4; ++p)
        for (std::size_t q = p + 1; q < 4; ++q) s += P(p, i) * P(q, j);
      CHECK(mask(i, j) == s);
    }
}

TEST_CASE("sampled DAGs are acyclic and respect the sampled order") {
  for (PermMode mode : {PermMode::TopK, PermMode::Sinkhorn}) {
    const DpDagModel m = random_model(12, mode, 3);
    GumbelSource noise(9);
    for (int i = 0; i < 200; ++i) {
      const DagSample s = sample_dag(m, &noise);
      CHECK(is_acyclic(s.hard.matrix()));
      const Tensor mask = order_mask(s.perm);
      for (std::size_t a = 0; a < 12; ++a)
        for (std::size_t b = 0; b < 12; ++b) {
          if (s.hard(a, b)) CHECK(mask(a, b) == 1.0);
          if (mask(a, b) == 0.0) CHECK(s.soft(a, b) == 0.0);
        }
    }
  }
}

TEST_CASE("tape DAG sampling matches the plain sampler and is straight-through") {
  for (PermMode mode : {PermMode::TopK, PermMode::Sinkhorn}) {
    const DpDagModel m = random_model(6, mode, 4);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      GumbelSource n1(seed), n2(seed);
      const DagSample plain = sample_dag(m, &n1);
      ad::Tape t;
      Parameter logits(m.edges.logits), scores(m.perm.scores);
      DagSample out;
      ad::Var a = sample_dag(t.param(logits), t.param(scores), m, &n2, Estimator::StraightThrough, &out);
      CHECK(out.hard == plain.hard);
      CHECK(out.perm == plain.perm);
      CHECK(testing::max_abs_diff(out.soft, plain.soft) < 1e-12);
      CHECK(a.value() == plain.hard.to_tensor());
      t.backward(ad::sum(a));
      double g = 0.0;
      for (double v : logits.grad.data()) g += std::abs(v);
      CHECK(g > 0.0);
    }
  }
}

TEST_CASE("relaxed DAG sampling stays inside [0,1] and forbids the diagonal") {
  const DpDagModel m = random_model(5, PermMode::Sinkhorn, 5);
  GumbelSource noise(1);
  ad::Tape t;
  Parameter logits(m.edges.logits), scores(m.perm.scores);
  ad::Var a = sample_dag(t.param(logits), t.param(scores), m, &noise, Estimator::Relaxed);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(std::abs(a.value()(i, i)) < 1e-6);
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(a.value()(i, j) >= -1e-12);
      CHECK(a.value()(i, j) <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("edge scores use the noise-free order") {
  DpDagModel m = DpDagModel::initial(3, PermMode::TopK, 1.0, 0, 0.0);
  m.perm.scores = Tensor::row_vector({2.0, 0.0, 1.0});  // order: node 0, node 2, node 1
  m.edges.logits = Tensor::from_rows({{0, 1, 2}, {3, 0, -1}, {0.5, -2, 0}});
  const PermutationMatrix pi = deterministic_permutation(m);
  CHECK(pi.perm() == std::vector<std::size_t>{0, 2, 1});
  const EdgeScores s = edge_scores(m);
  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  CHECK(s.directed(0, 1) == doctest::Approx(sig(1)));
  CHECK(s.directed(0, 2) == doctest::Approx(sig(2)));
  CHECK(s.directed(2, 1) == doctest::Approx(sig(-2)));
  CHECK(s.directed(1, 0) == 0.0);
  CHECK(s.directed(1, 2) == 0.0);
  CHECK(s.directed(2, 0) == 0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(s.directed(i, i) == 0.0);
    for (std::size_t j = 0; j < 3; ++j) CHECK(s.undirected(i, j) == s.undirected(j, i));
  }
  const AdjacencyMatrix a = threshold_dag(m, 0.5);
  CHECK(a.edge_count() == 2);
  CHECK(a.has_edge(1, 0));
  CHECK(a.has_edge(2, 0));
  CHECK(threshold_dag(m, 0.95).edge_count() == 0);
  CHECK_THROWS_AS(threshold_dag(m, 1.0), ParameterError);
}

TEST_CASE("initial model and validation") {
  const DpDagModel m = DpDagModel::initial(4, PermMode::Sinkhorn, 0.5, 1);
  CHECK(m.n() == 4);
  CHECK(m.perm.scores.rows() == 4);
  CHECK(m.edges.logits == Tensor(4, 4));
  const DpDagModel t = DpDagModel::initial(4, PermMode::TopK, 0.5, 1);
  CHECK(t.perm.scores.rows() == 1);
  DpDagModel bad = t;
  bad.edges.logits = Tensor(3, 3);
  CHECK_THROWS_AS(bad.validate(), DimensionError);
}

TEST_CASE("checkpoint round trip") {
  const DpDagModel m = random_model(5, PermMode::Sinkhorn, 8);
  const DpDagModel back = model_from_json(nlohmann::json::parse(model_to_json(m).dump()));
  CHECK(back.edges.logits == m.edges.logits);
  CHECK(back.perm.scores == m.perm.scores);
  CHECK(back.perm.mode == m.perm.mode);
  CHECK(back.perm.tau == m.perm.tau);

  testing::TempDir dir("ckpt");
  const std::string path = (dir.path / "model.json").string();
  save_model(path, m);
  CHECK(load_model(path).edges.logits == m.edges.logits);

  nlohmann::json j = model_to_json(m);
  j["version"] = 99;
  CHECK_THROWS_AS(model_from_json(j), ParseError);
  j = model_to_json(m);
  j.erase("logits");
  CHECK_THROWS_AS(model_from_json(j), ParseError);
  j = model_to_json(m);
  j["n"] = 7;
  CHECK_THROWS_AS(model_from_json(j), ParseError);
  std::ofstream(dir.path / "junk.json") << "{not json";
  CHECK_THROWS_AS(load_model((dir.path / "junk.json").string()), ParseError);
}
