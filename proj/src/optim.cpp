#include "admp/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace admp {

namespace {

Tensor& lookup(ParamSet& params, const std::string& name, const Tensor& grad) {
  auto it = params.find(name);
  if (it == params.end()) throw std::out_of_range("optimizer: gradient for unknown parameter '" + name + "'");
  if (it->second.shape() != grad.shape()) {
    throw ShapeError("optimizer: parameter '" + name + "' has shape " + shape_string(it->second.shape()) +
                     " but its gradient has shape " + shape_string(grad.shape()));
  }
  return it->second;
}

}  // namespace

void adam_step(ParamSet& params, const GradSet& grads, OptimizerState& state, const AdamConfig& config) {
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (const auto& [name, g] : grads) {
    Tensor& p = lookup(params, name, g);
    auto [it, fresh] = state.moments.try_emplace(name);
    Moments& mom = it->second;
    if (fresh) {
      mom.first = Tensor::zeros_like(p);
      mom.second = Tensor::zeros_like(p);
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      mom.first[i] = config.beta1 * mom.first[i] + (1.0 - config.beta1) * g[i];
      mom.second[i] = config.beta2 * mom.second[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = mom.first[i] / c1;
      const double v_hat = mom.second[i] / c2;
      p[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

void sgd_step(ParamSet& params, const GradSet& grads, OptimizerState& state, double learning_rate) {
  state.step += 1;
  for (const auto& [name, g] : grads) {
    Tensor& p = lookup(params, name, g);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= learning_rate * g[i];
  }
}

}  // namespace admp
