#include "dpdag/mechanisms.hpp"

#include <cmath>
#include <random>

#include "dpdag/dp_dag.hpp"
#include "dpdag/errors.hpp"

namespace dpdag {

namespace {
Parameter uniform_param(std::size_t rows, std::size_t cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t(rows, cols);
  for (double& v : t.data()) v = u(rng);
  return Parameter(std::move(t));
}
}  // namespace

MechanismNet MechanismNet::initial(std::size_t n, std::size_t hidden, std::uint64_t seed) {
  if (n == 0 || hidden == 0) throw ParameterError("mechanisms: n and hidden must be positive");
  std::mt19937_64 rng(seed);
  MechanismNet net;
  net.n = n;
  net.hidden = hidden;
  const double in_bound = 1.0 / std::sqrt(static_cast<double>(n));
  const double h_bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  net.w1 = uniform_param(n, n * hidden, in_bound, rng);
  net.b1 = uniform_param(1, n * hidden, in_bound, rng);
  net.w2 = uniform_param(n, hidden * hidden, h_bound, rng);
  net.b2 = uniform_param(1, n * hidden, h_bound, rng);
  net.w3 = uniform_param(n, hidden, h_bound, rng);
  net.b3 = uniform_param(1, n, h_bound, rng);
  return net;
}

std::vector<Parameter*> MechanismNet::parameters() { return {&w1, &b1, &w2, &b2, &w3, &b3}; }

void MechanismNet::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

ad::Var mechanism_forward(ad::Tape& tape, MechanismNet& net, ad::Var x, ad::Var mask) {
  if (x.cols() != net.n) {
    throw DimensionError("mechanism_forward: batch " + shape_string(x.value()) + " for n=" + std::to_string(net.n));
  }
  ad::Var inputs = ad::masked_replicate(x, mask);
  ad::Var h1 = ad::leaky_relu(ad::add_bias(ad::grouped_matmul(inputs, tape.param(net.w1), net.n), tape.param(net.b1)),
                              net.leaky_slope);
  ad::Var h2 = ad::leaky_relu(ad::add_bias(ad::grouped_matmul(h1, tape.param(net.w2), net.n), tape.param(net.b2)),
                              net.leaky_slope);
  return ad::add_bias(ad::grouped_matmul(h2, tape.param(net.w3), net.n), tape.param(net.b3));
}

Tensor predict(const MechanismNet& net, const Tensor& adjacency, const Tensor& x) {
  ad::Tape tape;
  MechanismNet copy = net;
  return mechanism_forward(tape, copy, tape.constant(x), tape.constant(adjacency)).value();
}

nlohmann::json mechanisms_to_json(const MechanismNet& net) {
  return {{"n", net.n},
          {"hidden", net.hidden},
          {"leaky_slope", net.leaky_slope},
          {"w1", tensor_to_json(net.w1.value)},
          {"b1", tensor_to_json(net.b1.value)},
          {"w2", tensor_to_json(net.w2.value)},
          {"b2", tensor_to_json(net.b2.value)},
          {"w3", tensor_to_json(net.w3.value)},
          {"b3", tensor_to_json(net.b3.value)}};
}

MechanismNet mechanisms_from_json(const nlohmann::json& j) {
  try {
    MechanismNet net;
    net.n = j.at("n").get<std::size_t>();
    net.hidden = j.at("hidden").get<std::size_t>();
    net.leaky_slope = j.at("leaky_slope").get<double>();
    net.w1 = Parameter(tensor_from_json(j.at("w1")));
    net.b1 = Parameter(tensor_from_json(j.at("b1")));
    net.w2 = Parameter(tensor_from_json(j.at("w2")));
    net.b2 = Parameter(tensor_from_json(j.at("b2")));
    net.w3 = Parameter(tensor_from_json(j.at("w3")));
    net.b3 = Parameter(tensor_from_json(j.at("b3")));
    const std::size_t n = net.n, h = net.hidden;
    if (!net.w1.value.same_shape(Tensor(n, n * h)) || !net.w2.value.same_shape(Tensor(n, h * h)) ||
        !net.w3.value.same_shape(Tensor(n, h)) || !net.b1.value.same_shape(Tensor(1, n * h)) ||
        !net.b2.value.same_shape(Tensor(1, n * h)) || !net.b3.value.same_shape(Tensor(1, n))) {
      throw ParseError("mechanisms: tensor shapes do not match n/hidden");
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("mechanisms: ") + e.what());
  }
}

}  // namespace dpdag
