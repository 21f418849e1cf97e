#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"
#include "dpdag/errors.hpp"
#include "dpdag/graph.hpp"
#include "oracles.hpp"

using namespace dpdag;

using oracles::matrix_from_code;

TEST_CASE("acyclicity over all small graphs matches the labeled-DAG counts") {
  // Number of labeled DAGs on 3 and 4 nodes (OEIS A003024).
  std::size_t dags3 = 0, dags4 = 0;
  for (std::uint32_t c = 0; c < (1u << 6); ++c) dags3 += is_acyclic(matrix_from_code(3, c)) ? 1 : 0;
  for (std::uint32_t c = 0; c < (1u << 12); ++c) dags4 += is_acyclic(matrix_from_code(4, c)) ? 1 : 0;
  CHECK(dags3 == 25);
  CHECK(dags4 == 543);
}

TEST_CASE("compose and decompose round-trip every four-node DAG") {
  std::size_t checked = 0;
  for (std::uint32_t c = 0; c < (1u << 12); ++c) {
    const BinaryMatrix m = matrix_from_code(4, c);
    if (!is_acyclic(m)) continue;
    const AdjacencyMatrix a(m);
    const auto [pi, u] = decompose(a);
    CHECK(compose(pi, u) == a);
    ++checked;
  }
  CHECK(checked == 543);
}

TEST_CASE("compose of any permutation and upper-triangular matrix is a DAG") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + trial % 9;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    BinaryMatrix u(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) u.set(i, j, rng() % 2);
    const PermutationMatrix pi(perm);
    const AdjacencyMatrix a = compose(pi, UpperTriangularEdges(u));
    CHECK(is_acyclic(a.matrix()));
    CHECK(a.edge_count() == u.count());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) CHECK(a(i, j) == u(perm[i], perm[j]));
  }
}

TEST_CASE("compose equals the matrix product Pi^T U Pi") {
  const PermutationMatrix pi({2, 0, 3, 1});
  const BinaryMatrix u = BinaryMatrix::from_rows({{0, 1, 1, 0}, {0, 0, 1, 1}, {0, 0, 0, 1}, {0, 0, 0, 0}});
  const Tensor P = pi.matrix(), U = u.to_tensor();
  const AdjacencyMatrix a = compose(pi, UpperTriangularEdges(u));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < 4; ++p)
        for (std::size_t q = 0; q < 4; ++q) s += P(p, i) * U(p, q) * P(q, j);
      CHECK(a(i, j) == (s == 1.0));
    }
}

TEST_CASE("permutation matrix views") {
  const PermutationMatrix pi({2, 0, 1});
  CHECK(pi.inverse() == std::vector<std::size_t>{1, 2, 0});
  const Tensor m = pi.matrix();
  CHECK(m(2, 0) == 1);
  CHECK(m(0, 1) == 1);
  CHECK(m(1, 2) == 1);
  const PermutationMatrix from_rows = PermutationMatrix::from_row_assignment({1, 2, 0});
  CHECK(from_rows == pi);
  CHECK(pi.row_assignment() == std::vector<std::size_t>{1, 2, 0});
  CHECK(PermutationMatrix::identity(3).perm() == std::vector<std::size_t>{0, 1, 2});
  CHECK_THROWS_AS(PermutationMatrix({0, 0, 1}), ParameterError);
  CHECK_THROWS_AS(PermutationMatrix({0, 3, 1}), ParameterError);
}

TEST_CASE("invalid structures are rejected") {
  CHECK_THROWS_AS(AdjacencyMatrix::from_rows({{0, 1}, {1, 0}}), AcyclicityError);
  CHECK_THROWS_AS(AdjacencyMatrix::from_rows({{1, 0}, {0, 0}}), AcyclicityError);
  CHECK_THROWS_AS(UpperTriangularEdges(BinaryMatrix::from_rows({{0, 0}, {1, 0}})), ParameterError);
  CHECK_THROWS_AS(UpperTriangularEdges(BinaryMatrix::from_rows({{1, 0}, {0, 0}})), ParameterError);
  CHECK_THROWS_AS(decompose(BinaryMatrix::from_rows({{0, 1, 0}, {0, 0, 1}, {1, 0, 0}})), AcyclicityError);
  CHECK_THROWS_AS(AdjacencyMatrix::from_edges(3, {{0, 3}}), DimensionError);
}

TEST_CASE("cycle diagnostics name the cycle") {
  try {
    AdjacencyMatrix::from_rows({{0, 0, 1}, {1, 0, 0}, {0, 1, 0}});
    FAIL("expected AcyclicityError");
  } catch (const AcyclicityError& e) {
    CHECK(std::string(e.what()).find("cycle") != std::string::npos);
  }
}

TEST_CASE("edges, parents and topological order") {
  // 0 -> 1, 0 -> 2, 1 -> 3, 2 -> 3
  const AdjacencyMatrix a = AdjacencyMatrix::from_edges(4, {{0, 1}, {0, 2}, {1, 3}, {2, 3}});
  CHECK(a.has_edge(0, 1));
  CHECK_FALSE(a.has_edge(1, 0));
  CHECK(a(1, 0));
  CHECK(a.parents(3) == std::vector<std::size_t>{1, 2});
  CHECK(a.parents(0).empty());
  CHECK(a.edge_count() == 4);
  CHECK(topological_order(a) == std::vector<std::size_t>{0, 1, 2, 3});
  const AdjacencyMatrix b = AdjacencyMatrix::from_edges(3, {{2, 0}, {1, 0}});
  CHECK(topological_order(b) == std::vector<std::size_t>{1, 2, 0});
}

TEST_CASE("decompose puts parents at larger positions") {
  const AdjacencyMatrix a = AdjacencyMatrix::from_edges(4, {{3, 0}, {3, 1}, {1, 0}});
  const auto [pi, u] = decompose(a);
  for (const auto& [p, c] : a.edges()) CHECK(pi[p] > pi[c]);
}

TEST_CASE("edge list round trip and parse errors") {
  const AdjacencyMatrix a = AdjacencyMatrix::from_edges(5, {{0, 4}, {2, 1}, {3, 1}, {4, 2}});
  std::stringstream ss;
  write_edge_list(ss, a);
  CHECK(read_edge_list(ss, 5) == a);

  std::istringstream with_comments("# truth\n\n1 5\n  3 2 \n");
  CHECK(read_edge_list(with_comments, 5) == AdjacencyMatrix::from_edges(5, {{0, 4}, {2, 1}}));

  auto parse = [](const std::string& s, std::size_t n) {
    std::istringstream in(s);
    return read_edge_list(in, n);
  };
  CHECK_THROWS_AS(parse("1 2\n2 1\n", 3), AcyclicityError);
  CHECK_THROWS_AS(parse("1 x\n", 3), ParseError);
  CHECK_THROWS_AS(parse("1 4\n", 3), ParseError);
  CHECK_THROWS_AS(parse("0 1\n", 3), ParseError);
  CHECK_THROWS_AS(parse("1 2 3\n", 3), ParseError);
  try {
    parse("1 2\n2 q\n", 3);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS(read_edge_list_file("/nonexistent/truth.edges", 3));
}
