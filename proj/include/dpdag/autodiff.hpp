#pragma once

// Tape-based reverse-mode differentiation over dense 2-D tensors.
//
// A Tape records every operation in execution order, so the node list is
// topologically sorted by construction. backward() walks it once in reverse.
// Leaves are either constants or Parameters; gradients of Parameters are
// added into Parameter::grad, which the caller zeroes between steps.

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "dpdag/tensor.hpp"

namespace dpdag::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Tensor& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

enum class OpKind {
  Leaf,
  Matmul,
  Add,
  Sub,
  Mul,
  Scale,
  AddBias,
  Sigmoid,
  SoftmaxRows,
  Log,
  Exp,
  LeakyRelu,
  Sum,
  Mean,
  SquaredNorm,
  Transpose,
  RowNormalize,
  ColNormalize,
  LogRowNormalize,
  LogColNormalize,
  ConcatCols,
  SliceCols,
  GroupedMatmul,
  MaskedReplicate,
  PairwiseAbsDiff,
  PermuteCols,
  BernoulliKl,
  StraightThrough,
};

const char* op_name(OpKind k);

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Registers a trainable leaf. The tape reads p.value now and adds into
  /// p.grad during backward(); `p` must outlive the backward call.
  Var param(Parameter& p);

  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  OpKind kind(std::size_t id) const { return nodes_[id].kind; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient of the last backward() loss w.r.t. node `id` (zeros if unreached).
  const Tensor& grad(std::size_t id) const;
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  // Used by op implementations.
  using Adjoint = std::function<void(Tape&, std::size_t self)>;
  Var record(OpKind kind, Tensor value, std::vector<std::size_t> inputs, Adjoint adjoint);
  Tensor& grad_mut(std::size_t id);

 private:
  struct Node {
    OpKind kind = OpKind::Leaf;
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    Adjoint adjoint;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };
  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

// --- ops -------------------------------------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
/// x (B×m) plus row vector b (1×m) added to every row.
Var add_bias(Var x, Var b);
Var sigmoid(Var x);
Var softmax_rows(Var x);
Var log(Var x);
Var exp(Var x);
Var leaky_relu(Var x, double slope = 0.01);
Var sum(Var x);
Var mean(Var x);
Var squared_norm(Var x);
Var transpose(Var x);
/// Divide each row (column) by its sum.
Var row_normalize(Var x);
Var col_normalize(Var x);
/// Subtract each row's (column's) log-sum-exp; the log-space Sinkhorn step.
Var log_row_normalize(Var x);
Var log_col_normalize(Var x);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var x, std::size_t begin, std::size_t end);
/// See kernels::grouped_matmul.
Var grouped_matmul(Var x, Var w, std::size_t groups);
/// x (B×n), mask (n×n) -> B×(n·n) with out[b][i·n+k] = x[b][k]·mask[i][k].
Var masked_replicate(Var x, Var mask);
/// a, b row vectors of length n -> n×n with out[i][j] = |a_i - b_j|.
Var pairwise_abs_diff(Var a, Var b);
/// x row vector -> y with y[k] = x[order[k]].
Var permute_cols(Var x, std::vector<std::size_t> order);
/// Elementwise KL(Ber(sigmoid(logit)) || Ber(prior)).
Var bernoulli_kl(Var logits, double prior);
/// Forward value `hard`; backward routes the adjoint to `soft` unchanged.
Var straight_through(const Tensor& hard, Var soft);

}  // namespace dpdag::ad
