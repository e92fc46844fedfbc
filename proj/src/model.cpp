#include "admp/model.hpp"

#include <algorithm>

namespace admp {

Var JointSample::at(std::size_t var) const {
  if (!has(var)) throw std::out_of_range("joint sample has no value for variable " + std::to_string(var));
  return values[var];
}

namespace {

FamilySpec default_family(const VariableDecl& v, std::vector<std::size_t> hidden) {
  FamilySpec f;
  switch (v.support.kind) {
    case Support::Kind::real: f.kind = FamilyKind::gaussian; break;
    case Support::Kind::binary: f.kind = FamilyKind::bernoulli; break;
    case Support::Kind::categorical: f.kind = FamilyKind::categorical; break;
  }
  f.hidden = std::move(hidden);
  return f;
}

Tensor repeat_tensor_rows(const Tensor& t, std::size_t times) {
  const std::size_t n = t.rows(), m = t.cols();
  Tensor out({n * times, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < times; ++k)
      for (std::size_t j = 0; j < m; ++j) out(i * times + k, j) = t(i, j);
  return out;
}

}  // namespace

Model::Model(ModelSpec spec) : spec_(std::move(spec)), graph_(ModelGraph::from(spec_.graph)) {
  for (std::size_t v = 0; v < graph_.size(); ++v) {
    const VariableDecl& decl = graph_.variable(v);
    auto it = spec_.generative.find(decl.name);
    if (it == spec_.generative.end()) {
      it = spec_.generative.emplace(decl.name, default_family(decl, graph_.parents(v).empty() ? std::vector<std::size_t>{}
                                                                                              : std::vector<std::size_t>{16}))
               .first;
    }
    const bool implicit = it->second.kind == FamilyKind::implicit;
    if (implicit != (graph_.factor(v).kind == FactorKind::implicit_sampler)) {
      throw GraphError("factor '" + decl.name + "': declared kind disagrees with its family");
    }
    generative_.emplace_back("theta/" + decl.name, it->second, width(graph_.parents(v)), decl);
  }
  for (const auto& [name, fam] : spec_.inference) {
    if (!graph_.find(name)) throw GraphError("inference family for unknown variable '" + name + "'");
    (void)fam;
  }
  inverse_ = apply_inverse_overrides(graph_, derive_inverse_factorization(graph_, graph_.observed()),
                                     spec_.inverse_overrides);
  if (spec_.oracle) {
    const OracleSpec& o = *spec_.oracle;
    if (o.kind != "linear_gaussian") throw GraphError("unknown oracle kind '" + o.kind + "'");
    const std::size_t z = graph_.index_of(o.latent);
    const std::size_t x = graph_.index_of(o.observed);
    if (graph_.size() != 2 || graph_.parents(z).size() != 0 || graph_.parents(x) != std::vector<std::size_t>{z} ||
        spec_.generative.at(o.latent).kind != FamilyKind::gaussian ||
        spec_.generative.at(o.observed).kind != FamilyKind::gaussian ||
        !spec_.generative.at(o.observed).hidden.empty() ||
        spec_.generative.at(o.observed).scale_mode == ScaleMode::network || width(z) != 1 || width(x) != 1) {
      throw GraphError("linear_gaussian oracle needs z ~ N(m, s^2), x | z ~ N(a z + b, sigma^2) with 1-D z and x");
    }
  }
}

std::size_t Model::width(const std::vector<std::size_t>& vars) const {
  std::size_t w = 0;
  for (std::size_t v : vars) w += width(v);
  return w;
}

InverseFactorization Model::inverse_for(const std::vector<std::size_t>& observed) const {
  if (observed == graph_.observed()) return inverse_;
  return derive_inverse_factorization(graph_, observed);
}

std::string Model::pattern_tag(const std::vector<std::size_t>& observed) const {
  if (observed == graph_.observed()) return "";
  std::string tag = "@";
  for (std::size_t k = 0; k < observed.size(); ++k) tag += (k ? "+" : "") + graph_.name(observed[k]);
  return tag;
}

FamilySpec Model::inference_family(std::size_t var) const {
  const VariableDecl& decl = graph_.variable(var);
  if (auto it = spec_.inference.find(decl.name); it != spec_.inference.end()) return it->second;
  FamilySpec f = default_family(decl, {32});
  if (f.kind == FamilyKind::gaussian) f.scale_mode = ScaleMode::network;
  return f;
}

Conditional Model::inference(const InverseFactor& factor, const std::string& tag) const {
  return Conditional("phi/" + factor.network + tag, inference_family(factor.var), width(factor.given),
                     graph_.variable(factor.var));
}

ParamSet Model::init_generative(Rng& rng) const {
  ParamSet params;
  for (const Conditional& c : generative_) c.init(params, rng);
  return params;
}

ParamSet Model::init_inference(const std::vector<InverseFactorization>& patterns, Rng& rng) const {
  ParamSet params;
  for (const auto& inv : patterns) {
    const std::string tag = pattern_tag(inv.observed);
    for (const auto& f : inv.factors) inference(f, tag).init(params, rng);
  }
  return params;
}

bool Model::trainable(const std::string& name) const {
  if (name.rfind("theta/", 0) == 0) {
    for (const Conditional& c : generative_)
      if (c.is_frozen(name)) return false;
    return true;
  }
  if (name.rfind("phi/q_", 0) == 0) {
    const std::size_t end = name.find_first_of("@/", 6);
    const std::string var = name.substr(6, end - 6);
    const std::string prefix = name.substr(0, name.find('/', 6));
    if (auto idx = graph_.find(var)) {
      return !Conditional(prefix, inference_family(*idx), 0, graph_.variable(*idx)).is_frozen(name);
    }
  }
  return true;
}

Var Model::gather(const JointSample& joint, const std::vector<std::size_t>& vars) const {
  if (vars.empty()) return Var();
  std::vector<Var> parts;
  parts.reserve(vars.size());
  for (std::size_t v : vars) {
    if (!joint.has(v)) throw std::out_of_range("joint sample is missing variable '" + graph_.name(v) + "'");
    parts.push_back(joint.values[v]);
  }
  if (parts.size() == 1) return parts[0];
  return concat_cols(parts);
}

JointSample Model::ancestral_sample(Bindings& theta, std::size_t rows, Rng& rng) const {
  JointSample joint;
  joint.values.assign(graph_.size(), Var());
  joint.rows = rows;
  for (std::size_t v : graph_.topological_order()) {
    Draw d = generative_[v].sample(theta, gather(joint, graph_.parents(v)), rows, rng);
    joint.values[v] = d.value;
    if (d.discrete) joint.discrete_draws.push_back(v);
  }
  return joint;
}

JointSample Model::inference_sample(Bindings& phi, const InverseFactorization& inv, const Evidence& evidence,
                                    std::size_t particles, Rng& rng, const std::string& tag) const {
  JointSample joint;
  joint.values.assign(graph_.size(), Var());
  std::size_t rows = 0;
  bool first = true;
  for (std::size_t o : inv.observed) {
    if (o >= evidence.size() || evidence[o].empty()) {
      throw std::invalid_argument("inference_sample: missing observed variable '" + graph_.name(o) + "'");
    }
    const Tensor& e = evidence[o];
    check_support(graph_.variable(o), e);
    if (first) {
      rows = e.rows();
      first = false;
    } else if (e.rows() != rows) {
      throw ShapeError("inference_sample: evidence row counts differ");
    }
  }
  joint.rows = rows * particles;
  if (joint.rows == 0) return joint;
  Tape& tape = phi.tape();
  for (std::size_t o : inv.observed) joint.values[o] = tape.constant(repeat_tensor_rows(evidence[o], particles));
  for (const InverseFactor& f : inv.factors) {
    Draw d = inference(f, tag).sample(phi, gather(joint, f.given), joint.rows, rng);
    joint.values[f.var] = d.value;
    if (d.discrete) joint.discrete_draws.push_back(f.var);
  }
  return joint;
}

Var Model::factor_log_prob(Bindings& theta, std::size_t var, const JointSample& joint) const {
  return generative_[var].log_prob(theta, gather(joint, graph_.parents(var)), joint.at(var));
}

Draw Model::sample_factor(Bindings& theta, std::size_t var, const JointSample& joint, Rng& rng) const {
  return generative_[var].sample(theta, gather(joint, graph_.parents(var)), joint.rows, rng);
}

Var Model::inference_log_prob(Bindings& phi, const InverseFactor& factor, const JointSample& joint,
                              const std::string& tag) const {
  return inference(factor, tag).log_prob(phi, gather(joint, factor.given), joint.at(factor.var));
}

}  // namespace admp
