#include "admp/adversary.hpp"

#include <cmath>
#include <stdexcept>

namespace admp {

LocalAdversary::LocalAdversary(std::string prefix, std::size_t factor, std::vector<std::size_t> slots,
                               std::size_t input_width, AdversaryConfig config)
    : prefix_(std::move(prefix)),
      factor_(factor),
      slots_(std::move(slots)),
      input_width_(input_width),
      config_(std::move(config)) {
  if (input_width_ == 0) throw std::invalid_argument("adversary '" + prefix_ + "' has an empty input tuple");
  if (!(config_.clamp > 0)) throw std::invalid_argument("adversary clamp must be positive");
}

MlpShape LocalAdversary::network_shape() const {
  MlpShape shape;
  shape.input = input_width_;
  shape.hidden = config_.hidden;
  shape.output = 1;
  shape.hidden_activation = config_.activation;
  return shape;
}

void LocalAdversary::init(ParamSet& params, Rng& rng) const { init_mlp(params, prefix_, network_shape(), rng); }

Var LocalAdversary::logits(Bindings& xi, Var tuple) const {
  if (tuple.cols() != input_width_) {
    throw ShapeError("adversary '" + prefix_ + "' expects tuples of width " + std::to_string(input_width_) + ", got " +
                     std::to_string(tuple.cols()));
  }
  return clamp(mlp_forward(xi, prefix_, network_shape(), tuple), -config_.clamp, config_.clamp);
}

Var LocalAdversary::probability(Bindings& xi, Var tuple) const { return sigmoid(logits(xi, tuple)); }

Tensor discriminate(const LocalAdversary& adv, const ParamSet& xi, const Tensor& tuple) {
  Tape tape;
  Bindings b(tape, xi, false);
  return adv.probability(b, tape.constant(tuple)).value();
}

Var loss_locD(Var td_logits, Var bu_logits) {
  if (!td_logits.valid() || !bu_logits.valid() || td_logits.rows() == 0 || bu_logits.rows() == 0) {
    throw std::invalid_argument("loss_locD: both sample sets must be nonempty");
  }
  return mean(softplus(neg(td_logits))) + mean(softplus(bu_logits));
}

Var ratio_log(Var logits, RatioDirection direction) {
  switch (direction) {
    case RatioDirection::p_over_m: return log_sigmoid(logits);
    case RatioDirection::q_over_m: return log_sigmoid(neg(logits));
    case RatioDirection::p_over_q: return logits;
    case RatioDirection::q_over_p: return neg(logits);
  }
  throw std::logic_error("unreachable");
}

double ratio_log(double logit, RatioDirection direction) {
  switch (direction) {
    case RatioDirection::p_over_m: return -stable_softplus(-logit);
    case RatioDirection::q_over_m: return -stable_softplus(logit);
    case RatioDirection::p_over_q: return logit;
    case RatioDirection::q_over_p: return -logit;
  }
  throw std::logic_error("unreachable");
}

Discriminator analytic_optimal_discriminator(Density p, Density q) {
  return [p = std::move(p), q = std::move(q)](const std::vector<double>& x) {
    const double a = p(x), b = q(x);
    if (a + b <= 0.0) return 0.5;
    return a / (a + b);
  };
}

double optimal_logit(double log_p, double log_q) { return log_p - log_q; }

}  // namespace admp
