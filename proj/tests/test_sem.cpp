#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "doctest.h"
#include "dpdag/errors.hpp"
#include "dpdag/sem.hpp"
#include "support.hpp"

using namespace dpdag;

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("ER graphs have exactly m edges and are acyclic") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    GenSpec s;
    s.n = 10;
    s.m = 10 + seed;
    s.seed = seed;
    const AdjacencyMatrix a = gen_graph(s);
    CHECK(a.edge_count() == s.m);
    CHECK(is_acyclic(a.matrix()));
  }
  GenSpec too_many;
  too_many.n = 4;
  too_many.m = 7;
  CHECK_THROWS_AS(too_many.validate(), ParameterError);
}

TEST_CASE("scale-free graphs are acyclic with the expected edge budget and hubs") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GenSpec s;
    s.kind = GraphKind::SF;
    s.n = 20;
    s.m = 40;
    s.seed = seed;
    const AdjacencyMatrix a = gen_graph(s);
    CHECK(is_acyclic(a.matrix()));
    // round(m/n) = 2 edges per new node, fewer while fewer nodes exist
    CHECK(a.edge_count() <= 40);
    CHECK(a.edge_count() >= 36);
  }
  GenSpec s;
  s.kind = GraphKind::SF;
  s.n = 100;
  s.m = 100;
  s.seed = 3;
  const AdjacencyMatrix a = gen_graph(s);
  std::vector<std::size_t> degree(100, 0);
  for (const auto& [p, c] : a.edges()) {
    degree[p]++;
    degree[c]++;
  }
  CHECK(*std::max_element(degree.begin(), degree.end()) >= 8);
}

TEST_CASE("graph generation is deterministic in the seed") {
  GenSpec s;
  s.seed = 42;
  CHECK(gen_graph(s) == gen_graph(s));
  GenSpec t = s;
  t.seed = 43;
  CHECK_FALSE(gen_graph(s) == gen_graph(t));
}

TEST_CASE("an empty graph yields pure noise") {
  GenSpec s;
  s.n = 4;
  s.m = 0;
  s.samples = 2000;
  s.noise_std = 2.0;
  s.standardize = false;
  s.seed = 1;
  const SemDataset d = generate_dataset(s);
  for (std::size_t c = 0; c < 4; ++c) {
    double mean = 0.0, var = 0.0;
    for (std::size_t r = 0; r < d.samples(); ++r) mean += d.x(r, c);
    mean /= d.samples();
    for (std::size_t r = 0; r < d.samples(); ++r) var += std::pow(d.x(r, c) - mean, 2);
    var /= d.samples();
    CHECK(std::abs(mean) <= 4 * s.noise_std / std::sqrt(2000.0));
    CHECK(var == doctest::Approx(4.0).epsilon(0.1));
  }
}

TEST_CASE("a near-noiseless chain is a smooth function of its parent") {
  GenSpec s;
  s.n = 2;
  s.m = 1;
  s.samples = 400;
  s.noise_std = 1e-6;
  s.standardize = false;
  s.seed = 2;
  const AdjacencyMatrix chain = AdjacencyMatrix::from_edges(2, {{0, 1}});
  const SemDataset d = gen_mechanisms_and_sample(chain, s);
  std::vector<std::size_t> idx(400);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return d.x(a, 0) < d.x(b, 0); });
  double worst_slope = 0.0;
  for (std::size_t k = 1; k < idx.size(); ++k) {
    const double dx = d.x(idx[k], 0) - d.x(idx[k - 1], 0);
    const double dy = std::abs(d.x(idx[k], 1) - d.x(idx[k - 1], 1));
    if (dx > 1e-3) worst_slope = std::max(worst_slope, dy / dx);
  }
  CHECK(worst_slope < 10.0);
}

TEST_CASE("gp draws give duplicated parent rows identical values") {
  Tensor p = testing::random_tensor(50, 2, 5, -2, 2);
  for (std::size_t c = 0; c < 2; ++c) {
    p(10, c) = p(3, c);
    p(40, c) = p(3, c);
    p(41, c) = p(7, c);
  }
  std::mt19937_64 rng(1);
  const std::vector<double> f = gp_draw(p, 1.0, rng);
  CHECK(f[10] == f[3]);
  CHECK(f[40] == f[3]);
  CHECK(f[41] == f[7]);
  CHECK(f[3] != f[7]);

  Tensor same(30, 1, 0.25);
  std::mt19937_64 rng2(2);
  const std::vector<double> g = gp_draw(same, 1.0, rng2);
  CHECK(std::all_of(g.begin(), g.end(), [&](double v) { return v == g[0]; }));
}

TEST_CASE("gp draws have unit marginal variance") {
  Tensor p(1, 1, 0.0);
  double m2 = 0.0;
  for (std::uint64_t s = 0; s < 4000; ++s) {
    std::mt19937_64 rng(s);
    const double v = gp_draw(p, 1.0, rng)[0];
    m2 += v * v;
  }
  CHECK(m2 / 4000 == doctest::Approx(1.0).epsilon(0.08));
}

TEST_CASE("standardization gives zero mean and unit variance") {
  GenSpec s;
  s.seed = 6;
  const SemDataset d = generate_dataset(s);
  for (std::size_t c = 0; c < d.n(); ++c) {
    double mean = 0.0, var = 0.0;
    for (std::size_t r = 0; r < d.samples(); ++r) mean += d.x(r, c);
    mean /= d.samples();
    for (std::size_t r = 0; r < d.samples(); ++r) var += std::pow(d.x(r, c) - mean, 2);
    var /= d.samples();
    CHECK(std::abs(mean) < 1e-12);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-10));
  }
  CHECK(d.meta.at("standardized").get<bool>());
  CHECK(d.meta.at("column_stds").size() == d.n());
}

TEST_CASE("80/10/10 split is a disjoint cover") {
  const Split sp = make_split(1000, 3);
  CHECK(sp.train.size() == 800);
  CHECK(sp.val.size() == 100);
  CHECK(sp.test.size() == 100);
  std::set<std::size_t> all(sp.train.begin(), sp.train.end());
  all.insert(sp.val.begin(), sp.val.end());
  all.insert(sp.test.begin(), sp.test.end());
  CHECK(all.size() == 1000);
  CHECK(*all.rbegin() == 999);
  const Split small = make_split(7, 1);
  CHECK(small.train.size() + small.val.size() + small.test.size() == 7);
  CHECK(make_split(1000, 3).train == sp.train);
}

TEST_CASE("csv round trip is exact and parse errors carry line numbers") {
  const Tensor x = testing::random_tensor(5, 3, 7, -1e6, 1e6);
  std::stringstream ss;
  write_csv(ss, x);
  CHECK(read_csv(ss) == x);

  std::istringstream header("a,b\n1,2\n3,4\n");
  CHECK(read_csv(header) == Tensor::from_rows({{1, 2}, {3, 4}}));

  std::istringstream ragged("1,2\n3\n");
  CHECK_THROWS_AS(read_csv(ragged), ParseError);
  std::istringstream text("1,2\n3,abc\n");
  try {
    read_csv(text);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::istringstream empty("");
  CHECK_THROWS_AS(read_csv(empty), ParseError);
}

TEST_CASE("dataset save and load round trip; generation is byte-identical per seed") {
  testing::TempDir dir("sem");
  GenSpec s;
  s.n = 6;
  s.m = 5;
  s.samples = 200;
  s.seed = 11;
  const SemDataset d = generate_dataset(s);
  save_dataset((dir.path / "a").string(), d);
  save_dataset((dir.path / "b").string(), generate_dataset(s));
  for (const char* f : {"data.csv", "truth.edges", "meta.json"})
    CHECK(read_file(dir.path / "a" / f) == read_file(dir.path / "b" / f));

  const SemDataset back = load_dataset((dir.path / "a").string());
  CHECK(back.x == d.x);
  CHECK(back.truth == d.truth);
  CHECK(back.split.train == d.split.train);
  CHECK(back.split.test == d.split.test);
  CHECK(back.name == d.name);

  const SemDataset csv = load_csv((dir.path / "a" / "data.csv").string(), (dir.path / "a" / "truth.edges").string(), 4);
  CHECK(csv.n() == 6);
  CHECK(csv.truth == d.truth);
  CHECK_THROWS(load_dataset((dir.path / "missing").string()));
}

TEST_CASE("generator spec validation and json") {
  GenSpec s;
  s.noise_std = 0.0;
  CHECK_THROWS_AS(s.validate(), ParameterError);
  GenSpec t;
  t.kind = GraphKind::SF;
  t.n = 20;
  t.m = 40;
  t.seed = 9;
  const GenSpec back = gen_spec_from_json(to_json(t));
  CHECK(back.kind == GraphKind::SF);
  CHECK(back.n == 20);
  CHECK(back.m == 40);
  CHECK(back.seed == 9);
  CHECK(t.label() == "SF-20-40");
  CHECK(parse_graph_kind("er") == GraphKind::ER);
  CHECK_THROWS_AS(parse_graph_kind("ws"), ParameterError);
}
