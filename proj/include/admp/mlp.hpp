#pragma once

#include <string>
#include <vector>

#include "admp/params.hpp"
#include "admp/rng.hpp"

namespace admp {

enum class Activation { identity, tanh, relu, sigmoid, softplus };

Activation parse_activation(const std::string& name);
std::string to_string(Activation act);
Var apply_activation(Activation act, Var x);

/// Layer sizes of a feed-forward network. Weights are stored as
/// `<prefix>/W<k>` with shape [fan_in, fan_out] and biases as `<prefix>/b<k>`
/// with shape [1, fan_out].
struct MlpShape {
  std::size_t input = 0;
  std::vector<std::size_t> hidden;
  std::size_t output = 0;
  Activation hidden_activation = Activation::tanh;
  Activation output_activation = Activation::identity;

  std::size_t layers() const { return hidden.size() + 1; }
  bool operator==(const MlpShape&) const = default;
};

/// Weights uniform in ±1/sqrt(fan_in), biases zero.
void init_mlp(ParamSet& params, const std::string& prefix, const MlpShape& shape, Rng& rng);

Var mlp_forward(Bindings& params, const std::string& prefix, const MlpShape& shape, Var input);

}  // namespace admp
