#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "admp/params.hpp"

namespace admp {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct Moments {
  Tensor first;
  Tensor second;
  bool operator==(const Moments&) const = default;
};

/// Adaptive-moment accumulators for one group of parameters. `step` counts
/// update calls on this state.
struct OptimizerState {
  std::map<std::string, Moments> moments;
  std::uint64_t step = 0;
  bool operator==(const OptimizerState&) const = default;
};

/// One bias-corrected Adam update of every parameter named in `grads`.
void adam_step(ParamSet& params, const GradSet& grads, OptimizerState& state, const AdamConfig& config);

/// Plain gradient descent; increments state.step so counters stay comparable.
void sgd_step(ParamSet& params, const GradSet& grads, OptimizerState& state, double learning_rate);

}  // namespace admp
