#include "admp/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace admp {

Activation parse_activation(const std::string& name) {
  if (name == "identity" || name == "linear") return Activation::identity;
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "softplus") return Activation::softplus;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softplus: return "softplus";
  }
  return "identity";
}

Var apply_activation(Activation act, Var x) {
  switch (act) {
    case Activation::identity: return x;
    case Activation::tanh: return tanh(x);
    case Activation::relu: return relu(x);
    case Activation::sigmoid: return sigmoid(x);
    case Activation::softplus: return softplus(x);
  }
  return x;
}

void init_mlp(ParamSet& params, const std::string& prefix, const MlpShape& shape, Rng& rng) {
  std::size_t fan_in = shape.input;
  for (std::size_t k = 0; k < shape.layers(); ++k) {
    const std::size_t fan_out = k < shape.hidden.size() ? shape.hidden[k] : shape.output;
    Tensor w({fan_in, fan_out});
    const double bound = fan_in > 0 ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : 0.0;
    for (double& v : w.values()) v = (2.0 * rng.uniform() - 1.0) * bound;
    params[prefix + "/W" + std::to_string(k)] = std::move(w);
    params[prefix + "/b" + std::to_string(k)] = Tensor({1, fan_out}, 0.0);
    fan_in = fan_out;
  }
}

Var mlp_forward(Bindings& params, const std::string& prefix, const MlpShape& shape, Var input) {
  if (input.cols() != shape.input) {
    throw ShapeError("mlp_forward(" + prefix + "): expected input width " + std::to_string(shape.input) + ", got " +
                     shape_string(input.value().shape()));
  }
  Var h = input;
  for (std::size_t k = 0; k < shape.layers(); ++k) {
    const std::string idx = std::to_string(k);
    h = add(matmul(h, params(prefix + "/W" + idx)), params(prefix + "/b" + idx));
    h = apply_activation(k + 1 < shape.layers() ? shape.hidden_activation : shape.output_activation, h);
  }
  return h;
}

}  // namespace admp
