#include "dpdag/graph.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <queue>
#include <sstream>

#include "dpdag/errors.hpp"

namespace dpdag {

BinaryMatrix::BinaryMatrix(std::size_t n, std::vector<std::uint8_t> bits) : n_(n), bits_(std::move(bits)) {
  if (bits_.size() != n * n) throw DimensionError("binary matrix: expected " + std::to_string(n * n) + " entries");
  for (auto& b : bits_) b = b ? 1 : 0;
}

BinaryMatrix BinaryMatrix::from_rows(std::initializer_list<std::initializer_list<int>> rows) {
  const std::size_t n = rows.size();
  BinaryMatrix m(n);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != n) throw DimensionError("binary matrix: rows must have length " + std::to_string(n));
    std::size_t j = 0;
    for (int v : row) m.set(i, j++, v != 0);
    ++i;
  }
  return m;
}

BinaryMatrix BinaryMatrix::from_tensor(const Tensor& t, double threshold) {
  if (t.rows() != t.cols()) throw DimensionError("binary matrix: tensor " + shape_string(t) + " is not square");
  BinaryMatrix m(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m.set(i, j, t(i, j) > threshold);
  return m;
}

std::size_t BinaryMatrix::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

Tensor BinaryMatrix::to_tensor() const {
  Tensor t(n_, n_);
  for (std::size_t k = 0; k < bits_.size(); ++k) t[k] = bits_[k];
  return t;
}

namespace {

// Kahn over "children-first": repeatedly remove a node none of whose children
// remain. Returns the removal order; shorter than n iff there is a cycle.
std::vector<std::size_t> kahn_children_first(const BinaryMatrix& a) {
  const std::size_t n = a.n();
  std::vector<std::size_t> out_degree(n, 0);  // remaining children of each node
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (a(i, j)) ++out_degree[j];
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t v = 0; v < n; ++v)
    if (out_degree[v] == 0) ready.push(v);
  std::vector<std::size_t> order;
  order.reserve(n);
  while (!ready.empty()) {
    const std::size_t v = ready.top();
    ready.pop();
    order.push_back(v);
    for (std::size_t p = 0; p < n; ++p) {
      if (a(v, p) && --out_degree[p] == 0) ready.push(p);
    }
  }
  return order;
}

std::string describe_cycle(const BinaryMatrix& a, const std::vector<std::size_t>& removed) {
  const std::size_t n = a.n();
  std::vector<bool> gone(n, false);
  for (std::size_t v : removed) gone[v] = true;
  // every remaining node has a remaining child; walk child links until a repeat
  std::size_t start = 0;
  while (start < n && gone[start]) ++start;
  std::vector<std::size_t> pos(n, n);
  std::vector<std::size_t> path;
  std::size_t v = start;
  while (pos[v] == n) {
    pos[v] = path.size();
    path.push_back(v);
    std::size_t next = n;
    for (std::size_t c = 0; c < n; ++c) {
      if (!gone[c] && a(c, v)) {
        next = c;
        break;
      }
    }
    v = next;
  }
  std::ostringstream s;
  for (std::size_t k = pos[v]; k < path.size(); ++k) s << path[k] + 1 << " -> ";
  s << v + 1;
  return s.str();
}

}  // namespace

bool is_acyclic(const BinaryMatrix& m) { return kahn_children_first(m).size() == m.n(); }

AdjacencyMatrix::AdjacencyMatrix(BinaryMatrix m) : m_(std::move(m)) {
  for (std::size_t i = 0; i < m_.n(); ++i) {
    if (m_(i, i)) throw AcyclicityError("adjacency: self-loop at node " + std::to_string(i + 1));
  }
  const auto order = kahn_children_first(m_);
  if (order.size() != m_.n()) {
    throw AcyclicityError("adjacency: graph has a cycle " + describe_cycle(m_, order));
  }
}

AdjacencyMatrix AdjacencyMatrix::from_edges(std::size_t n,
                                            const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  BinaryMatrix m(n);
  for (const auto& [parent, child] : edges) {
    if (parent >= n || child >= n) throw DimensionError("adjacency: edge endpoint out of range");
    m.set(child, parent, true);
  }
  return AdjacencyMatrix(std::move(m));
}

std::vector<std::pair<std::size_t, std::size_t>> AdjacencyMatrix::edges() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < n(); ++i)
    for (std::size_t j = 0; j < n(); ++j)
      if (m_(i, j)) out.emplace_back(j, i);
  return out;
}

std::vector<std::size_t> AdjacencyMatrix::parents(std::size_t node) const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < n(); ++j)
    if (m_(node, j)) out.push_back(j);
  return out;
}

PermutationMatrix::PermutationMatrix(std::vector<std::size_t> perm) : perm_(std::move(perm)) {
  std::vector<bool> seen(perm_.size(), false);
  for (std::size_t v : perm_) {
    if (v >= perm_.size() || seen[v]) throw ParameterError("permutation: not a bijection");
    seen[v] = true;
  }
}

PermutationMatrix PermutationMatrix::identity(std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t k = 0; k < n; ++k) p[k] = k;
  return PermutationMatrix(std::move(p));
}

PermutationMatrix PermutationMatrix::from_row_assignment(const std::vector<std::size_t>& assignment) {
  // P(r, assignment[r]) = 1 and P(perm[c], c) = 1  =>  perm = assignment^-1
  return PermutationMatrix(PermutationMatrix(assignment).inverse());
}

std::vector<std::size_t> PermutationMatrix::inverse() const {
  std::vector<std::size_t> inv(perm_.size());
  for (std::size_t k = 0; k < perm_.size(); ++k) inv[perm_[k]] = k;
  return inv;
}

Tensor PermutationMatrix::matrix() const {
  Tensor m(n(), n());
  for (std::size_t c = 0; c < n(); ++c) m(perm_[c], c) = 1.0;
  return m;
}

UpperTriangularEdges::UpperTriangularEdges(BinaryMatrix m) : m_(std::move(m)) {
  for (std::size_t i = 0; i < m_.n(); ++i)
    for (std::size_t j = 0; j <= i; ++j)
      if (m_(i, j)) {
        throw ParameterError("upper-triangular edges: entry (" + std::to_string(i + 1) + "," +
                             std::to_string(j + 1) + ") set on or below the diagonal");
      }
}

AdjacencyMatrix compose(const PermutationMatrix& pi, const UpperTriangularEdges& u) {
  if (pi.n() != u.n()) {
    throw DimensionError("compose: permutation of size " + std::to_string(pi.n()) + " with " +
                         std::to_string(u.n()) + "x" + std::to_string(u.n()) + " edges");
  }
  const std::size_t n = pi.n();
  BinaryMatrix a(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a.set(i, j, u(pi[i], pi[j]));
  return AdjacencyMatrix(std::move(a));
}

std::pair<PermutationMatrix, UpperTriangularEdges> decompose(const BinaryMatrix& a) {
  const std::size_t n = a.n();
  const auto order = kahn_children_first(a);
  if (order.size() != n) throw AcyclicityError("decompose: graph has a cycle " + describe_cycle(a, order));
  std::vector<std::size_t> perm(n);
  for (std::size_t k = 0; k < n; ++k) perm[order[k]] = k;
  BinaryMatrix u(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (a(i, j)) u.set(perm[i], perm[j], true);
  return {PermutationMatrix(std::move(perm)), UpperTriangularEdges(std::move(u))};
}

std::vector<std::size_t> topological_order(const AdjacencyMatrix& a) {
  const std::size_t n = a.n();
  std::vector<std::size_t> in_degree(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (a(i, j)) ++in_degree[i];
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t v = 0; v < n; ++v)
    if (in_degree[v] == 0) ready.push(v);
  std::vector<std::size_t> order;
  while (!ready.empty()) {
    const std::size_t v = ready.top();
    ready.pop();
    order.push_back(v);
    for (std::size_t c = 0; c < n; ++c)
      if (a(c, v) && --in_degree[c] == 0) ready.push(c);
  }
  return order;
}

AdjacencyMatrix read_edge_list(std::istream& in, std::size_t n) {
  BinaryMatrix m(n);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    long long u = 0, v = 0;
    std::string extra;
    if (!(ls >> u >> v) || (ls >> extra)) {
      throw ParseError("edge list line " + std::to_string(lineno) + ": expected two integers, got '" + line + "'");
    }
    if (u < 1 || v < 1 || static_cast<std::size_t>(u) > n || static_cast<std::size_t>(v) > n) {
      throw ParseError("edge list line " + std::to_string(lineno) + ": node id out of range 1.." +
                       std::to_string(n));
    }
    if (u == v) throw ParseError("edge list line " + std::to_string(lineno) + ": self-loop");
    m.set(static_cast<std::size_t>(v - 1), static_cast<std::size_t>(u - 1), true);
  }
  return AdjacencyMatrix(std::move(m));
}

AdjacencyMatrix read_edge_list_file(const std::string& path, std::size_t n) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open edge list '" + path + "'");
  return read_edge_list(in, n);
}

void write_edge_list(std::ostream& out, const AdjacencyMatrix& a) {
  for (const auto& [parent, child] : a.edges()) out << parent + 1 << ' ' << child + 1 << '\n';
}

}  // namespace dpdag
