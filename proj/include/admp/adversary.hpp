#pragma once

#include <functional>
#include <string>
#include <vector>

#include "admp/mlp.hpp"
#include "admp/params.hpp"

namespace admp {

struct AdversaryConfig {
  std::vector<std::size_t> hidden{64, 64};
  Activation activation = Activation::tanh;
  double clamp = 30.0;
};

/// A discriminator over a fixed tuple of variables. `slots` lists the
/// variable indices whose values are concatenated, in order, to form the
/// input; `factor` is the variable whose factor owns the adversary.
class LocalAdversary {
 public:
  LocalAdversary(std::string prefix, std::size_t factor, std::vector<std::size_t> slots, std::size_t input_width,
                 AdversaryConfig config = {});

  const std::string& prefix() const { return prefix_; }
  std::size_t factor() const { return factor_; }
  const std::vector<std::size_t>& slots() const { return slots_; }
  std::size_t input_width() const { return input_width_; }
  const AdversaryConfig& config() const { return config_; }
  MlpShape network_shape() const;

  void init(ParamSet& params, Rng& rng) const;
  /// Clamped logits [N, 1].
  Var logits(Bindings& xi, Var tuple) const;
  /// D = sigmoid(logits), probability the tuple came from the top-down chain.
  Var probability(Bindings& xi, Var tuple) const;

 private:
  std::string prefix_;
  std::size_t factor_;
  std::vector<std::size_t> slots_;
  std::size_t input_width_;
  AdversaryConfig config_;
};

/// D evaluated on plain values; rows of `tuple` are independent inputs.
Tensor discriminate(const LocalAdversary& adv, const ParamSet& xi, const Tensor& tuple);

/// mean softplus(-l_td) + mean softplus(l_bu): cross-entropy with label 1 on
/// top-down tuples and 0 on bottom-up tuples.
Var loss_locD(Var td_logits, Var bu_logits);

enum class RatioDirection { p_over_m, q_over_m, p_over_q, q_over_p };

/// log D, log(1 - D), logit, -logit for the four directions.
Var ratio_log(Var logits, RatioDirection direction);
double ratio_log(double logit, RatioDirection direction);

using Density = std::function<double(const std::vector<double>&)>;
using Discriminator = std::function<double(const std::vector<double>&)>;

/// D*(x) = p(x) / (p(x) + q(x)); 0.5 where both vanish.
Discriminator analytic_optimal_discriminator(Density p, Density q);
/// log p(x) - log q(x), the logit of D*, from log densities.
double optimal_logit(double log_p, double log_q);

}  // namespace admp
