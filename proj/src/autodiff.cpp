#include "dpdag/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dpdag/errors.hpp"
#include "dpdag/kernels.hpp"

namespace dpdag::ad {

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Matmul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::AddBias: return "add_bias";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::SoftmaxRows: return "softmax_rows";
    case OpKind::Log: return "log";
    case OpKind::Exp: return "exp";
    case OpKind::LeakyRelu: return "leaky_relu";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::SquaredNorm: return "squared_norm";
    case OpKind::Transpose: return "transpose";
    case OpKind::RowNormalize: return "row_normalize";
    case OpKind::ColNormalize: return "col_normalize";
    case OpKind::LogRowNormalize: return "log_row_normalize";
    case OpKind::LogColNormalize: return "log_col_normalize";
    case OpKind::ConcatCols: return "concat_cols";
    case OpKind::SliceCols: return "slice_cols";
    case OpKind::GroupedMatmul: return "grouped_matmul";
    case OpKind::MaskedReplicate: return "masked_replicate";
    case OpKind::PairwiseAbsDiff: return "pairwise_abs_diff";
    case OpKind::PermuteCols: return "permute_cols";
    case OpKind::BernoulliKl: return "bernoulli_kl";
    case OpKind::StraightThrough: return "straight_through";
  }
  return "?";
}

const Tensor& Var::value() const { return tape->value(id); }
const Tensor& Var::grad() const { return tape->grad(id); }

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  Node node;
  node.value = p.value;
  node.param = &p;
  node.needs_grad = true;
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Tape::record(OpKind kind, Tensor value, std::vector<std::size_t> inputs, Adjoint adjoint) {
  Node node;
  node.kind = kind;
  node.value = std::move(value);
  node.needs_grad = std::any_of(inputs.begin(), inputs.end(),
                                [this](std::size_t i) { return nodes_[i].needs_grad; });
  node.inputs = std::move(inputs);
  if (node.needs_grad) node.adjoint = std::move(adjoint);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Tensor& Tape::grad_mut(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.grad.same_shape(n.value)) n.grad = Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

const Tensor& Tape::grad(std::size_t id) const {
  // const access still materializes zeros so callers always get a full shape
  return const_cast<Tape*>(this)->grad_mut(id);
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("backward: loss belongs to a different tape");
  if (nodes_.empty()) throw ContractError("backward: empty tape");
  if (!nodes_[loss.id].value.is_scalar()) {
    throw ContractError("backward: loss must be scalar, got " + shape_string(nodes_[loss.id].value));
  }
  if (backward_done_) {
    for (auto& n : nodes_) n.grad.fill(0.0);
  }
  backward_done_ = true;
  grad_mut(loss.id)(0, 0) = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || !n.grad.same_shape(n.value)) continue;
    if (n.adjoint) n.adjoint(*this, i);
    if (n.param != nullptr) {
      Tensor& pg = n.param->grad;
      if (!pg.same_shape(n.value)) pg = Tensor(n.value.rows(), n.value.cols());
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
    }
  }
}

// --- helpers ---------------------------------------------------------------

namespace {

Tape& tape_of(std::initializer_list<Var> vs, const char* op) {
  Tape* t = vs.begin()->tape;
  for (const Var& v : vs) {
    if (v.tape == nullptr || v.tape != t) {
      throw ContractError(std::string(op) + ": operands on different tapes");
    }
  }
  return *t;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                         shape_string(b));
  }
}

void accumulate(Tape& t, std::size_t id, const Tensor& g) {
  if (!t.needs_grad(id)) return;
  Tensor& dst = t.grad_mut(id);
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += g[k];
}

double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

}  // namespace

// --- ops -------------------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = tape_of({a, b}, "matmul");
  Tensor y = kernels::matmul(a.value(), b.value());
  return t.record(OpKind::Matmul, std::move(y), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(a)) accumulate(t, a, kernels::matmul(g, t.value(b).transposed()));
    if (t.needs_grad(b)) accumulate(t, b, kernels::matmul(t.value(a).transposed(), g));
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of({a, b}, "add");
  require_same_shape("add", a.value(), b.value());
  Tensor y = a.value();
  for (std::size_t k = 0; k < y.size(); ++k) y[k] += b.value()[k];
  return t.record(OpKind::Add, std::move(y), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, std::size_t self) {
    accumulate(t, a, t.grad(self));
    accumulate(t, b, t.grad(self));
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of({a, b}, "sub");
  require_same_shape("sub", a.value(), b.value());
  Tensor y = a.value();
  for (std::size_t k = 0; k < y.size(); ++k) y[k] -= b.value()[k];
  return t.record(OpKind::Sub, std::move(y), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, std::size_t self) {
    accumulate(t, a, t.grad(self));
    if (t.needs_grad(b)) {
      Tensor neg = t.grad(self);
      for (double& v : neg.data()) v = -v;
      accumulate(t, b, neg);
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of({a, b}, "mul");
  require_same_shape("mul", a.value(), b.value());
  Tensor y = a.value();
  for (std::size_t k = 0; k < y.size(); ++k) y[k] *= b.value()[k];
  return t.record(OpKind::Mul, std::move(y), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(a)) {
      Tensor ga = g;
      for (std::size_t k = 0; k < ga.size(); ++k) ga[k] *= t.value(b)[k];
      accumulate(t, a, ga);
    }
    if (t.needs_grad(b)) {
      Tensor gb = g;
      for (std::size_t k = 0; k < gb.size(); ++k) gb[k] *= t.value(a)[k];
      accumulate(t, b, gb);
    }
  });
}

Var scale(Var a, double c) {
  Tape& t = *a.tape;
  Tensor y = a.value();
  for (double& v : y.data()) v *= c;
  return t.record(OpKind::Scale, std::move(y), {a.id}, [a = a.id, c](Tape& t, std::size_t self) {
    Tensor g = t.grad(self);
    for (double& v : g.data()) v *= c;
    accumulate(t, a, g);
  });
}

Var add_bias(Var x, Var b) {
  Tape& t = tape_of({x, b}, "add_bias");
  if (b.rows() != 1 || b.cols() != x.cols()) {
    throw DimensionError("add_bias: input " + shape_string(x.value()) + " bias " + shape_string(b.value()));
  }
  Tensor y = x.value();
  const std::size_t m = y.cols();
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t c = 0; c < m; ++c) y(r, c) += b.value()[c];
  return t.record(OpKind::AddBias, std::move(y), {x.id, b.id}, [x = x.id, b = b.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    accumulate(t, x, g);
    if (t.needs_grad(b)) {
      Tensor gb(1, g.cols());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
      accumulate(t, b, gb);
    }
  });
}

Var sigmoid(Var x) {
  Tape& t = *x.tape;
  Tensor y = x.value();
  for (double& v : y.data()) v = stable_sigmoid(v);
  return t.record(OpKind::Sigmoid, std::move(y), {x.id}, [x = x.id](Tape& t, std::size_t self) {
    Tensor g = t.grad(self);
    const Tensor& y = t.value(self);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] *= y[k] * (1.0 - y[k]);
    accumulate(t, x, g);
  });
}

Var softmax_rows(Var x) {
  Tape& t = *x.tape;
  Tensor y = x.value();
  kernels::log_normalize_rows(y);
  for (double& v : y.data()) v = std::exp(v);
  return t.record(OpKind::SoftmaxRows, std::move(y), {x.id}, [x = x.id](Tape& t, std::size_t self) {
    const Tensor& y = t.value(self);
    Tensor g = t.grad(self);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) = y(r, c) * (g(r, c) - dot);
    }
    accumulate(t, x, g);
  });
}

Var log(Var x) {
  Tape& t = *x.tape;
  Tensor y = x.value();
  for (double& v : y.data()) v = std::log(v);
  return t.record(OpKind::Log, std::move(y), {x.id}, [x = x.id](Tape& t, std::size_t self) {
    Tensor g = t.grad(self);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] /= t.value(x)[k];
    accumulate(t, x, g);
  });
}

Var exp(Var x) {
  Tape& t = *x.tape;
  Tensor y = x.value();
  for (double& v : y.data()) v = std::exp(v);
  return t.record(OpKind::Exp, std::move(y), {x.id}, [x = x.id](Tape& t, std::size_t self) {
    Tensor g = t.grad(self);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] *= t.value(self)[k];
    accumulate(t, x, g);
  });
}

Var leaky_relu(Var x, double slope) {
  Tape& t = *x.tape;
  Tensor y = x.value();
  for (double& v : y.data()) v = v > 0.0 ? v : slope * v;
  return t.record(OpKind::LeakyRelu, std::move(y), {x.id}, [x = x.id, slope](Tape& t, std::size_t self) {
    Tensor g = t.grad(self);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] *= t.value(x)[k] > 0.0 ? 1.0 : slope;
    accumulate(t, x, g);
  });
}

Var sum(Var x) {
  Tape& t = *x.tape;
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return t.record(OpKind::Sum, Tensor::scalar(s), {x.id}, [x = x.id](Tape& t, std::size_t self) {
    const Tensor& xv = t.value(x);
    accumulate(t, x, Tensor(xv.rows(), xv.cols(), t.grad(self)[0]));
  });
}

Var mean(Var x) {
  Tape& t = *x.tape;
  if (x.value().size() == 0) throw DimensionError("mean: empty tensor");
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const double n = static_cast<double>(x.value().size());
  return t.record(OpKind::Mean, Tensor::scalar(s / n), {x.id}, [x = x.id, n](Tape& t, std::size_t self) {
    const Tensor& xv = t.value(x);
    accumulate(t, x, Tensor(xv.rows(), xv.cols(), t.grad(self)[0] / n));
  });
}

Var squared_norm(Var x) {
  Tape& t = *x.tape;
  double s = 0.0;
  for (double v : x.value().data()) s += v * v;
  return t.record(OpKind::SquaredNorm, Tensor::scalar(s), {x.id}, [x = x.id](Tape& t, std::size_t self) {
    Tensor g = t.value(x);
    const double up = t.grad(self)[0];
    for (double& v : g.data()) v *= 2.0 * up;
    accumulate(t, x, g);
  });
}

Var transpose(Var x) {
  Tape& t = *x.tape;
  return t.record(OpKind::Transpose, x.value().transposed(), {x.id}, [x = x.id](Tape& t, std::size_t self) {
    accumulate(t, x, t.grad(self).transposed());
  });
}

Var row_normalize(Var x) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  Tensor y = xv;
  std::vector<double> sums(xv.rows(), 0.0);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    for (std::size_t c = 0; c < xv.cols(); ++c) sums[r] += xv(r, c);
    for (std::size_t c = 0; c < xv.cols(); ++c) y(r, c) /= sums[r];
  }
  return t.record(OpKind::RowNormalize, std::move(y), {x.id},
                  [x = x.id, sums = std::move(sums)](Tape& t, std::size_t self) {
                    const Tensor& y = t.value(self);
                    Tensor g = t.grad(self);
                    for (std::size_t r = 0; r < g.rows(); ++r) {
                      double dot = 0.0;
                      for (std::size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * y(r, c);
                      for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) = (g(r, c) - dot) / sums[r];
                    }
                    accumulate(t, x, g);
                  });
}

Var col_normalize(Var x) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  Tensor y = xv;
  std::vector<double> sums(xv.cols(), 0.0);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < xv.cols(); ++c) sums[c] += xv(r, c);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < xv.cols(); ++c) y(r, c) /= sums[c];
  return t.record(OpKind::ColNormalize, std::move(y), {x.id},
                  [x = x.id, sums = std::move(sums)](Tape& t, std::size_t self) {
                    const Tensor& y = t.value(self);
                    Tensor g = t.grad(self);
                    std::vector<double> dot(g.cols(), 0.0);
                    for (std::size_t r = 0; r < g.rows(); ++r)
                      for (std::size_t c = 0; c < g.cols(); ++c) dot[c] += g(r, c) * y(r, c);
                    for (std::size_t r = 0; r < g.rows(); ++r)
                      for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) = (g(r, c) - dot[c]) / sums[c];
                    accumulate(t, x, g);
                  });
}

// y = x - lse(x) per row; dx = g - softmax(x) * sum(g), and softmax(x) = exp(y).
Var log_row_normalize(Var x) {
  Tape& t = *x.tape;
  Tensor y = x.value();
  kernels::log_normalize_rows(y);
  return t.record(OpKind::LogRowNormalize, std::move(y), {x.id}, [x = x.id](Tape& t, std::size_t self) {
    const Tensor& y = t.value(self);
    Tensor g = t.grad(self);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) s += g(r, c);
      for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) -= std::exp(y(r, c)) * s;
    }
    accumulate(t, x, g);
  });
}

Var log_col_normalize(Var x) {
  Tape& t = *x.tape;
  Tensor y = x.value();
  kernels::log_normalize_cols(y);
  return t.record(OpKind::LogColNormalize, std::move(y), {x.id}, [x = x.id](Tape& t, std::size_t self) {
    const Tensor& y = t.value(self);
    Tensor g = t.grad(self);
    std::vector<double> s(g.cols(), 0.0);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) s[c] += g(r, c);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) -= std::exp(y(r, c)) * s[c];
    accumulate(t, x, g);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  Tape& t = *parts.front().tape;
  const std::size_t rows = parts.front().rows();
  std::size_t total = 0;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    if (p.tape != &t) throw ContractError("concat_cols: operands on different tapes");
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + shape_string(parts.front().value()) + " vs " +
                           shape_string(p.value()));
    }
    total += p.cols();
    ids.push_back(p.id);
  }
  Tensor y(rows, total);
  std::size_t off = 0;
  for (const Var& p : parts) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < p.cols(); ++c) y(r, off + c) = p.value()(r, c);
    off += p.cols();
  }
  return t.record(OpKind::ConcatCols, std::move(y), ids, [ids](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    std::size_t off = 0;
    for (std::size_t id : ids) {
      const Tensor& v = t.value(id);
      if (t.needs_grad(id)) {
        Tensor part(v.rows(), v.cols());
        for (std::size_t r = 0; r < v.rows(); ++r)
          for (std::size_t c = 0; c < v.cols(); ++c) part(r, c) = g(r, off + c);
        accumulate(t, id, part);
      }
      off += v.cols();
    }
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  Tape& t = *x.tape;
  if (begin > end || end > x.cols()) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of " + shape_string(x.value()));
  }
  Tensor y(x.rows(), end - begin);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = begin; c < end; ++c) y(r, c - begin) = x.value()(r, c);
  return t.record(OpKind::SliceCols, std::move(y), {x.id}, [x = x.id, begin](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(x);
    Tensor gx(xv.rows(), xv.cols());
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) gx(r, begin + c) = g(r, c);
    accumulate(t, x, gx);
  });
}

Var grouped_matmul(Var x, Var w, std::size_t groups) {
  Tape& t = tape_of({x, w}, "grouped_matmul");
  Tensor y = kernels::grouped_matmul(x.value(), w.value(), groups);
  return t.record(OpKind::GroupedMatmul, std::move(y), {x.id, w.id},
                  [x = x.id, w = w.id, groups](Tape& t, std::size_t self) {
                    const Tensor& g = t.grad(self);
                    if (t.needs_grad(x)) accumulate(t, x, kernels::grouped_matmul_grad_input(g, t.value(w), groups));
                    if (t.needs_grad(w)) accumulate(t, w, kernels::grouped_matmul_grad_weight(t.value(x), g, groups));
                  });
}

Var masked_replicate(Var x, Var mask) {
  Tape& t = tape_of({x, mask}, "masked_replicate");
  const Tensor& xv = x.value();
  const Tensor& mv = mask.value();
  const std::size_t n = xv.cols();
  if (mv.rows() != n || mv.cols() != n) {
    throw DimensionError("masked_replicate: input " + shape_string(xv) + " mask " + shape_string(mv));
  }
  Tensor y(xv.rows(), n * n);
  for (std::size_t b = 0; b < xv.rows(); ++b)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k) y(b, i * n + k) = xv(b, k) * mv(i, k);
  return t.record(OpKind::MaskedReplicate, std::move(y), {x.id, mask.id},
                  [x = x.id, m = mask.id, n](Tape& t, std::size_t self) {
                    const Tensor& g = t.grad(self);
                    const Tensor& xv = t.value(x);
                    const Tensor& mv = t.value(m);
                    if (t.needs_grad(x)) {
                      Tensor gx(xv.rows(), n);
                      for (std::size_t b = 0; b < xv.rows(); ++b)
                        for (std::size_t i = 0; i < n; ++i)
                          for (std::size_t k = 0; k < n; ++k) gx(b, k) += g(b, i * n + k) * mv(i, k);
                      accumulate(t, x, gx);
                    }
                    if (t.needs_grad(m)) {
                      Tensor gm(n, n);
                      for (std::size_t b = 0; b < xv.rows(); ++b)
                        for (std::size_t i = 0; i < n; ++i)
                          for (std::size_t k = 0; k < n; ++k) gm(i, k) += g(b, i * n + k) * xv(b, k);
                      accumulate(t, m, gm);
                    }
                  });
}

Var pairwise_abs_diff(Var a, Var b) {
  Tape& t = tape_of({a, b}, "pairwise_abs_diff");
  if (a.rows() != 1 || b.rows() != 1 || a.cols() != b.cols()) {
    throw DimensionError("pairwise_abs_diff: " + shape_string(a.value()) + " vs " + shape_string(b.value()));
  }
  const std::size_t n = a.cols();
  Tensor y(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) y(i, j) = std::abs(a.value()[i] - b.value()[j]);
  return t.record(OpKind::PairwiseAbsDiff, std::move(y), {a.id, b.id},
                  [a = a.id, b = b.id, n](Tape& t, std::size_t self) {
                    const Tensor& g = t.grad(self);
                    const Tensor& av = t.value(a);
                    const Tensor& bv = t.value(b);
                    Tensor ga(1, n), gb(1, n);
                    for (std::size_t i = 0; i < n; ++i) {
                      for (std::size_t j = 0; j < n; ++j) {
                        const double d = av[i] - bv[j];
                        const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                        ga[i] += g(i, j) * s;
                        gb[j] -= g(i, j) * s;
                      }
                    }
                    accumulate(t, a, ga);
                    accumulate(t, b, gb);
                  });
}

Var permute_cols(Var x, std::vector<std::size_t> order) {
  Tape& t = *x.tape;
  if (x.rows() != 1 || order.size() != x.cols()) {
    throw DimensionError("permute_cols: order of length " + std::to_string(order.size()) + " for " +
                         shape_string(x.value()));
  }
  Tensor y(1, order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (order[k] >= x.cols()) throw DimensionError("permute_cols: index out of range");
    y[k] = x.value()[order[k]];
  }
  return t.record(OpKind::PermuteCols, std::move(y), {x.id},
                  [x = x.id, order = std::move(order)](Tape& t, std::size_t self) {
                    const Tensor& g = t.grad(self);
                    Tensor gx(1, order.size());
                    for (std::size_t k = 0; k < order.size(); ++k) gx[order[k]] += g[k];
                    accumulate(t, x, gx);
                  });
}

// With phi = sigmoid(z): log phi = -softplus(-z), log(1-phi) = -softplus(z),
// and dKL/dz = phi (1 - phi) (z - logit(prior)).
Var bernoulli_kl(Var logits, double prior) {
  if (!(prior > 0.0 && prior < 1.0)) throw ParameterError("bernoulli_kl: prior must lie in (0,1)");
  Tape& t = *logits.tape;
  const double log_p = std::log(prior), log_q = std::log1p(-prior);
  Tensor y = logits.value();
  for (double& z : y.data()) {
    const double phi = stable_sigmoid(z);
    z = phi * (-softplus(-z) - log_p) + (1.0 - phi) * (-softplus(z) - log_q);
  }
  const double prior_logit = log_p - log_q;
  return t.record(OpKind::BernoulliKl, std::move(y), {logits.id},
                  [x = logits.id, prior_logit](Tape& t, std::size_t self) {
                    Tensor g = t.grad(self);
                    const Tensor& z = t.value(x);
                    for (std::size_t k = 0; k < g.size(); ++k) {
                      const double phi = stable_sigmoid(z[k]);
                      g[k] *= phi * (1.0 - phi) * (z[k] - prior_logit);
                    }
                    accumulate(t, x, g);
                  });
}

Var straight_through(const Tensor& hard, Var soft) {
  require_same_shape("straight_through", hard, soft.value());
  Tape& t = *soft.tape;
  return t.record(OpKind::StraightThrough, hard, {soft.id}, [s = soft.id](Tape& t, std::size_t self) {
    accumulate(t, s, t.grad(self));
  });
}

}  // namespace dpdag::ad
