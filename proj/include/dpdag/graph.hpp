#pragma once

// DAG and permutation types plus the permutation × upper-triangular
// factorization of a DAG adjacency matrix.
//
// Adjacency convention everywhere in this library: entry (i, j) = 1 means the
// directed edge j -> i, so row i is the parent indicator of node i. Edge-list
// files use the conventional "u v" = u -> v and are converted at the boundary.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "dpdag/tensor.hpp"

namespace dpdag {

/// Square 0/1 matrix with no structural guarantees.
class BinaryMatrix {
 public:
  BinaryMatrix() = default;
  explicit BinaryMatrix(std::size_t n) : n_(n), bits_(n * n, 0) {}
  BinaryMatrix(std::size_t n, std::vector<std::uint8_t> bits);

  static BinaryMatrix from_rows(std::initializer_list<std::initializer_list<int>> rows);
  /// Entry is 1 where `m(i, j) > threshold`.
  static BinaryMatrix from_tensor(const Tensor& m, double threshold = 0.5);

  std::size_t n() const { return n_; }
  bool operator()(std::size_t i, std::size_t j) const { return bits_[i * n_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v) { bits_[i * n_ + j] = v ? 1 : 0; }
  std::size_t count() const;
  Tensor to_tensor() const;
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  bool operator==(const BinaryMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// True iff Kahn's algorithm consumes every node. Diagonal entries count as
/// self-loops.
bool is_acyclic(const BinaryMatrix& m);

/// Acyclic, zero-diagonal adjacency matrix (row i = parents of node i).
class AdjacencyMatrix {
 public:
  AdjacencyMatrix() = default;
  explicit AdjacencyMatrix(std::size_t n) : m_(n) {}
  /// Throws AcyclicityError if `m` has a cycle or a nonzero diagonal.
  explicit AdjacencyMatrix(BinaryMatrix m);

  static AdjacencyMatrix from_rows(std::initializer_list<std::initializer_list<int>> rows) {
    return AdjacencyMatrix(BinaryMatrix::from_rows(rows));
  }
  /// Builds from directed (parent, child) pairs, 0-based.
  static AdjacencyMatrix from_edges(std::size_t n,
                                    const std::vector<std::pair<std::size_t, std::size_t>>& edges);

  std::size_t n() const { return m_.n(); }
  bool operator()(std::size_t i, std::size_t j) const { return m_(i, j); }
  bool has_edge(std::size_t parent, std::size_t child) const { return m_(child, parent); }
  std::size_t edge_count() const { return m_.count(); }
  /// (parent, child) pairs in row-major order of the matrix.
  std::vector<std::pair<std::size_t, std::size_t>> edges() const;
  std::vector<std::size_t> parents(std::size_t node) const;
  const BinaryMatrix& matrix() const { return m_; }
  Tensor to_tensor() const { return m_.to_tensor(); }

  bool operator==(const AdjacencyMatrix&) const = default;

 private:
  BinaryMatrix m_;
};

/// Component-wise permutation. The induced matrix has Pi(perm[c], c) = 1, so
/// that Pi^T U Pi has entry (i, j) = U(perm[i], perm[j]).
class PermutationMatrix {
 public:
  PermutationMatrix() = default;
  /// Throws ParameterError unless `perm` is a bijection on [0, n).
  explicit PermutationMatrix(std::vector<std::size_t> perm);

  static PermutationMatrix identity(std::size_t n);
  /// From a row assignment: the matrix with P(r, assignment[r]) = 1.
  static PermutationMatrix from_row_assignment(const std::vector<std::size_t>& assignment);

  std::size_t n() const { return perm_.size(); }
  std::size_t operator[](std::size_t k) const { return perm_[k]; }
  const std::vector<std::size_t>& perm() const { return perm_; }
  std::vector<std::size_t> inverse() const;
  /// Row assignment view: column of the 1 in each row.
  std::vector<std::size_t> row_assignment() const { return inverse(); }
  Tensor matrix() const;

  bool operator==(const PermutationMatrix&) const = default;

 private:
  std::vector<std::size_t> perm_;
};

/// Strictly upper-triangular 0/1 matrix.
class UpperTriangularEdges {
 public:
  UpperTriangularEdges() = default;
  explicit UpperTriangularEdges(std::size_t n) : m_(n) {}
  /// Throws ParameterError if any entry on or below the diagonal is set.
  explicit UpperTriangularEdges(BinaryMatrix m);

  std::size_t n() const { return m_.n(); }
  bool operator()(std::size_t i, std::size_t j) const { return m_(i, j); }
  const BinaryMatrix& matrix() const { return m_; }

  bool operator==(const UpperTriangularEdges&) const = default;

 private:
  BinaryMatrix m_;
};

/// A(i, j) = U(perm[i], perm[j]); always acyclic.
AdjacencyMatrix compose(const PermutationMatrix& pi, const UpperTriangularEdges& u);

/// Inverse of compose. The permutation is a Kahn order taken children-first
/// (node with no remaining children, lowest index first), so parents always
/// sit at larger positions than their children.
std::pair<PermutationMatrix, UpperTriangularEdges> decompose(const BinaryMatrix& a);
inline std::pair<PermutationMatrix, UpperTriangularEdges> decompose(const AdjacencyMatrix& a) {
  return decompose(a.matrix());
}

/// Lowest-index-first topological order (parents before children).
std::vector<std::size_t> topological_order(const AdjacencyMatrix& a);

/// Edge list: one "u v" line per edge, 1-based ids, u -> v. Blank lines and
/// lines starting with '#' are skipped. Throws ParseError with line numbers.
AdjacencyMatrix read_edge_list(std::istream& in, std::size_t n);
AdjacencyMatrix read_edge_list_file(const std::string& path, std::size_t n);
void write_edge_list(std::ostream& out, const AdjacencyMatrix& a);

}  // namespace dpdag
