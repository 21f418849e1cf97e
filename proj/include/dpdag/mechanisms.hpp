#pragma once

// Per-node causal mechanisms: n independent 3-layer MLPs (n -> h -> h -> 1,
// leaky-ReLU), evaluated together as grouped (block-diagonal) products. Node
// i sees the observation vector masked by row i of the adjacency matrix.

#include <cstdint>
#include <vector>

#include "dpdag/autodiff.hpp"
#include "dpdag/graph.hpp"
#include "json.hpp"

namespace dpdag {

struct MechanismNet {
  std::size_t n = 0;
  std::size_t hidden = 0;
  double leaky_slope = 0.01;
  // Row g of each weight holds node g's matrix, row-major.
  Parameter w1;  // n × (n·h)
  Parameter b1;  // 1 × (n·h)
  Parameter w2;  // n × (h·h)
  Parameter b2;  // 1 × (n·h)
  Parameter w3;  // n × h
  Parameter b3;  // 1 × n

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
  static MechanismNet initial(std::size_t n, std::size_t hidden, std::uint64_t seed);

  std::vector<Parameter*> parameters();
  void zero_grad();
};

/// Predictions (B×n) for a batch `x` (B×n) under adjacency `mask` (n×n).
ad::Var mechanism_forward(ad::Tape& tape, MechanismNet& net, ad::Var x, ad::Var mask);

/// Deterministic prediction X̂ with X̂_i = f_i(A_i ∘ x).
Tensor predict(const MechanismNet& net, const Tensor& adjacency, const Tensor& x);
inline Tensor predict(const MechanismNet& net, const AdjacencyMatrix& a, const Tensor& x) {
  return predict(net, a.to_tensor(), x);
}

nlohmann::json mechanisms_to_json(const MechanismNet& net);
MechanismNet mechanisms_from_json(const nlohmann::json& j);

}  // namespace dpdag
