#include "admp/densities.hpp"

#include <cmath>
#include <numbers>

namespace admp {

std::string to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::gaussian: return "gaussian";
    case FamilyKind::bernoulli: return "bernoulli";
    case FamilyKind::categorical: return "categorical";
    case FamilyKind::implicit: return "implicit";
  }
  return "gaussian";
}

std::string to_string(ScaleMode mode) {
  switch (mode) {
    case ScaleMode::network: return "network";
    case ScaleMode::learned: return "learned";
    case ScaleMode::fixed: return "fixed";
  }
  return "learned";
}

std::string to_string(NoiseKind kind) { return kind == NoiseKind::normal ? "normal" : "uniform"; }

Var gaussian_log_prob(Var x, Var mean, Var log_std) {
  static const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  Var z = mul(sub(x, mean), exp(neg(log_std)));
  Var lp = sub(scale(square(z), -0.5), log_std);
  return add_scalar(sum_cols(lp), -half_log_2pi * static_cast<double>(lp.cols()));
}

Var bernoulli_log_prob(Var x, Var logits) {
  for (double v : x.value().values()) {
    if (v != 0.0 && v != 1.0) throw DomainError("bernoulli_log_prob: observation " + std::to_string(v) + " is not binary");
  }
  return sum_cols(sub(mul(x, logits), softplus(logits)));
}

Var categorical_log_prob(Var onehot, Var logits) {
  const Tensor& x = onehot.value();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      const double v = x(i, j);
      if (v != 0.0 && v != 1.0) throw DomainError("categorical_log_prob: row is not one-hot");
      total += v;
    }
    if (total != 1.0) throw DomainError("categorical_log_prob: row is not one-hot");
  }
  return sum_cols(mul(onehot, log_softmax_rows(logits)));
}

Var gaussian_sample(Var mean, Var std, const Tensor& eps) {
  Var noise = const_cast<Tape*>(mean.tape())->constant(eps);
  return add(mean, mul(std, noise));
}

Tensor bernoulli_sample(const Tensor& logits, const Tensor& uniforms) {
  Tensor out(uniforms.shape());
  const bool shared = logits.rows() == 1;
  for (std::size_t i = 0; i < uniforms.rows(); ++i)
    for (std::size_t j = 0; j < uniforms.cols(); ++j) {
      const double p = stable_sigmoid(logits(shared ? 0 : i, j));
      out(i, j) = uniforms(i, j) < p ? 1.0 : 0.0;
    }
  return out;
}

Tensor categorical_sample(const Tensor& logits, const Tensor& uniforms) {
  const std::size_t n = uniforms.rows(), k = logits.cols();
  const bool shared = logits.rows() == 1;
  Tensor out({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = shared ? 0 : i;
    double mx = logits(r, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, logits(r, j));
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += std::exp(logits(r, j) - mx);
    double cum = 0.0;
    std::size_t pick = k - 1;
    for (std::size_t j = 0; j < k; ++j) {
      cum += std::exp(logits(r, j) - mx) / total;
      if (uniforms(i, 0) < cum) {
        pick = j;
        break;
      }
    }
    out(i, pick) = 1.0;
  }
  return out;
}

void check_support(const VariableDecl& var, const Tensor& value) {
  if (value.cols() != var.width()) {
    throw ShapeError("variable '" + var.name + "' expects width " + std::to_string(var.width()) + ", got " +
                     shape_string(value.shape()));
  }
  if (var.support.kind == Support::Kind::binary) {
    for (double v : value.values())
      if (v != 0.0 && v != 1.0) throw DomainError("variable '" + var.name + "' is binary but holds " + std::to_string(v));
  } else if (var.support.kind == Support::Kind::categorical) {
    for (std::size_t i = 0; i < value.rows(); ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < value.cols(); ++j) {
        const double v = value(i, j);
        if (v != 0.0 && v != 1.0) throw DomainError("variable '" + var.name + "' expects one-hot rows");
        total += v;
      }
      if (total != 1.0) throw DomainError("variable '" + var.name + "' expects one-hot rows");
    }
  }
}

Conditional::Conditional(std::string prefix, FamilySpec spec, std::size_t input_width, VariableDecl target)
    : prefix_(std::move(prefix)), spec_(std::move(spec)), input_width_(input_width), target_(std::move(target)) {
  const bool discrete_target = target_.support.discrete();
  if (spec_.kind == FamilyKind::gaussian && discrete_target) {
    throw GraphError("variable '" + target_.name + "' is discrete; a gaussian family cannot produce it");
  }
  if (spec_.kind == FamilyKind::bernoulli && target_.support.kind != Support::Kind::binary) {
    throw GraphError("bernoulli family requires binary support for '" + target_.name + "'");
  }
  if (spec_.kind == FamilyKind::categorical && target_.support.kind != Support::Kind::categorical) {
    throw GraphError("categorical family requires categorical support for '" + target_.name + "'");
  }
  if (spec_.kind == FamilyKind::implicit && discrete_target) {
    throw GraphError("implicit samplers produce real values; '" + target_.name + "' is discrete");
  }
}

std::size_t Conditional::noise_width() const {
  if (spec_.kind == FamilyKind::implicit) return spec_.noise_dim ? spec_.noise_dim : target_.width();
  if (spec_.kind == FamilyKind::categorical) return 1;
  return target_.width();
}

MlpShape Conditional::network_shape() const {
  MlpShape shape;
  shape.hidden = spec_.hidden;
  shape.hidden_activation = spec_.activation;
  const std::size_t d = target_.width();
  if (spec_.kind == FamilyKind::implicit) {
    shape.input = input_width_ + noise_width();
    shape.output = d;
  } else {
    shape.input = input_width_;
    shape.output = (spec_.kind == FamilyKind::gaussian && spec_.scale_mode == ScaleMode::network) ? 2 * d : d;
  }
  return shape;
}

namespace {

Tensor row_init(const std::vector<double>& values, std::size_t width, double fallback, const std::string& what) {
  Tensor t({1, width}, fallback);
  if (values.empty()) return t;
  if (values.size() != 1 && values.size() != width) {
    throw GraphError(what + ": expected 1 or " + std::to_string(width) + " values, got " +
                     std::to_string(values.size()));
  }
  for (std::size_t j = 0; j < width; ++j) t[j] = values.size() == 1 ? values[0] : values[j];
  return t;
}

Tensor log_of(Tensor t, const std::string& what) {
  for (double& v : t.values()) {
    if (!(v > 0)) throw GraphError(what + ": scale must be positive");
    v = std::log(v);
  }
  return t;
}

}  // namespace

void Conditional::init(ParamSet& params, Rng& rng) const {
  const std::size_t d = target_.width();
  const bool root = input_width_ == 0 && spec_.kind != FamilyKind::implicit;
  if (root) {
    if (spec_.kind == FamilyKind::gaussian) {
      params[prefix_ + "/mean"] = row_init(spec_.mean, d, 0.0, prefix_ + " mean");
      params[prefix_ + "/log_std"] = log_of(row_init(spec_.scale, d, 1.0, prefix_ + " scale"), prefix_);
    } else {
      params[prefix_ + "/logits"] = row_init(spec_.logits, d, 0.0, prefix_ + " logits");
    }
    return;
  }
  const MlpShape shape = network_shape();
  init_mlp(params, prefix_ + "/net", shape, rng);
  if (!spec_.weight.empty() || !spec_.bias.empty()) {
    if (!spec_.hidden.empty()) throw GraphError(prefix_ + ": weight/bias initializers need an affine network");
    if (!spec_.weight.empty()) {
      Tensor& w = params[prefix_ + "/net/W0"];
      if (spec_.weight.size() != w.size()) {
        throw GraphError(prefix_ + ": weight initializer needs " + std::to_string(w.size()) + " values");
      }
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = spec_.weight[i];
    }
    if (!spec_.bias.empty()) params[prefix_ + "/net/b0"] = row_init(spec_.bias, shape.output, 0.0, prefix_ + " bias");
  }
  if (spec_.kind == FamilyKind::gaussian && spec_.scale_mode != ScaleMode::network) {
    params[prefix_ + "/log_std"] = log_of(row_init(spec_.scale, d, 1.0, prefix_ + " scale"), prefix_);
  }
}

bool Conditional::is_frozen(const std::string& name) const {
  if (name.compare(0, prefix_.size() + 1, prefix_ + "/") != 0) return false;
  if (spec_.fixed) return true;
  return spec_.kind == FamilyKind::gaussian && spec_.scale_mode == ScaleMode::fixed && name == prefix_ + "/log_std";
}

Head Conditional::head(Bindings& params, Var input, std::size_t rows) const {
  Head h;
  h.kind = spec_.kind;
  if (spec_.kind == FamilyKind::implicit) {
    throw std::logic_error("implicit sampler '" + prefix_ + "' has no explicit density head");
  }
  (void)rows;
  const std::size_t d = target_.width();
  if (input_width_ == 0) {
    if (spec_.kind == FamilyKind::gaussian) {
      h.mean = params(prefix_ + "/mean");
      h.log_std = params(prefix_ + "/log_std");
    } else {
      h.logits = params(prefix_ + "/logits");
    }
    return h;
  }
  if (!input.valid() || input.cols() != input_width_) {
    throw ShapeError("conditional '" + prefix_ + "': expected conditioning width " + std::to_string(input_width_));
  }
  Var out = mlp_forward(params, prefix_ + "/net", network_shape(), input);
  if (spec_.kind == FamilyKind::gaussian) {
    if (spec_.scale_mode == ScaleMode::network) {
      h.mean = slice_cols(out, 0, d);
      h.log_std = slice_cols(out, d, 2 * d);
    } else {
      h.mean = out;
      h.log_std = params(prefix_ + "/log_std");
    }
  } else {
    h.logits = out;
  }
  return h;
}

Var Conditional::log_prob(Bindings& params, Var input, Var value) const {
  if (spec_.kind == FamilyKind::implicit) {
    throw std::logic_error("implicit sampler '" + prefix_ + "' has no density; score it with an adversary");
  }
  check_support(target_, value.value());
  Head h = head(params, input, value.rows());
  switch (spec_.kind) {
    case FamilyKind::gaussian: return gaussian_log_prob(value, h.mean, h.log_std);
    case FamilyKind::bernoulli: return bernoulli_log_prob(value, h.logits);
    case FamilyKind::categorical: return categorical_log_prob(value, h.logits);
    case FamilyKind::implicit: break;
  }
  throw std::logic_error("unreachable");
}

Tensor Conditional::draw_noise(std::size_t rows, Rng& rng) const {
  switch (spec_.kind) {
    case FamilyKind::gaussian: return rng.normal(rows, target_.width());
    case FamilyKind::bernoulli: return rng.uniform(rows, target_.width());
    case FamilyKind::categorical: return rng.uniform(rows, 1);
    case FamilyKind::implicit:
      return spec_.noise == NoiseKind::normal ? rng.normal(rows, noise_width()) : rng.uniform(rows, noise_width());
  }
  return {};
}

Draw Conditional::sample(Bindings& params, Var input, std::size_t rows, Rng& rng) const {
  return sample_with_noise(params, input, draw_noise(rows, rng));
}

Draw Conditional::sample_with_noise(Bindings& params, Var input, const Tensor& noise) const {
  Tape& tape = params.tape();
  const std::size_t rows = noise.rows();
  if (spec_.kind == FamilyKind::implicit) {
    Var eps = tape.constant(noise);
    Var in = eps;
    if (input_width_ > 0) {
      const Var parts[] = {input, eps};
      in = concat_cols(parts);
    }
    return {mlp_forward(params, prefix_ + "/net", network_shape(), in), false};
  }
  Head h = head(params, input, rows);
  if (spec_.kind == FamilyKind::gaussian) return {gaussian_sample(h.mean, exp(h.log_std), noise), false};
  if (spec_.kind == FamilyKind::bernoulli) return {tape.constant(bernoulli_sample(h.logits.value(), noise)), true};
  return {tape.constant(categorical_sample(h.logits.value(), noise)), true};
}

}  // namespace admp
