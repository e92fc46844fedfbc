#include "admp/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "admp/gradcheck.hpp"

namespace admp {

namespace {

const std::pair<Variant, const char*> kVariantNames[] = {
    {Variant::gan, "gan"},
    {Variant::global_biadv, "global-biadv"},
    {Variant::admp_jsd_loc, "admp-jsdloc"},
    {Variant::admp_kl_tractable, "admp-kl-tractable"},
    {Variant::admp_kl_intractable, "admp-kl-intractable"},
    {Variant::elbo, "elbo"},
};

bool is_subset(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

}  // namespace

Variant parse_variant(const std::string& name) {
  std::string key = name;
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return c == '_' ? '-' : std::tolower(c); });
  if (key == "admp-jsd-loc") key = "admp-jsdloc";
  for (const auto& [v, n] : kVariantNames)
    if (key == n) return v;
  throw std::invalid_argument("unknown variant '" + name + "'");
}

std::string to_string(Variant v) {
  for (const auto& [k, n] : kVariantNames)
    if (k == v) return n;
  return "unknown";
}

std::vector<Variant> all_variants() {
  std::vector<Variant> out;
  for (const auto& [v, n] : kVariantNames) out.push_back(v);
  return out;
}

bool uses_inference(Variant v) { return v != Variant::gan; }
bool uses_adversaries(Variant v) { return v != Variant::elbo; }

std::vector<std::size_t> adversary_factors(const ModelGraph& graph) {
  std::vector<std::vector<std::size_t>> tuples(graph.size());
  for (std::size_t v = 0; v < graph.size(); ++v) {
    tuples[v] = graph.parents(v);
    tuples[v].push_back(v);
    std::sort(tuples[v].begin(), tuples[v].end());
  }
  std::vector<std::size_t> out;
  for (std::size_t v : graph.topological_order()) {
    bool covered = false;
    for (std::size_t w = 0; w < graph.size() && !covered; ++w) {
      if (w == v || !is_subset(tuples[v], tuples[w])) continue;
      // equal tuples keep the later factor in topological order
      covered = tuples[v].size() < tuples[w].size() || graph.topological_rank(w) > graph.topological_rank(v);
    }
    if (!covered) out.push_back(v);
  }
  return out;
}

std::vector<LocalAdversary> local_adversaries(const Model& model, const AdversaryConfig& config) {
  const ModelGraph& g = model.graph();
  std::vector<LocalAdversary> out;
  for (std::size_t v : adversary_factors(g)) {
    std::vector<std::size_t> slots{v};
    for (std::size_t p : g.parents(v)) slots.push_back(p);
    out.emplace_back("xi/d_" + g.name(v), v, slots, model.width(slots), config);
  }
  return out;
}

double gan_value(const Tensor& d_data, const Tensor& d_gen) {
  if (d_data.size() == 0 || d_gen.size() == 0) throw std::invalid_argument("gan_value: empty batch");
  double a = 0.0, b = 0.0;
  for (double d : d_data.values()) a += std::log(d);
  for (double d : d_gen.values()) b += std::log1p(-d);
  return a / static_cast<double>(d_data.size()) + b / static_cast<double>(d_gen.size());
}

Var gan_value(Var data_logits, Var gen_logits) {
  return mean(log_sigmoid(data_logits)) + mean(log_sigmoid(neg(gen_logits)));
}

Var jsd_model_loss(const std::vector<Var>& td_logits, const std::vector<Var>& bu_logits) {
  if (td_logits.empty() || td_logits.size() != bu_logits.size()) {
    throw std::invalid_argument("jsd_model_loss: need one top-down and one bottom-up batch per adversary");
  }
  Var total;
  for (std::size_t i = 0; i < td_logits.size(); ++i) {
    Var term = scale(mean(ratio_log(bu_logits[i], RatioDirection::q_over_m)), 0.5) +
               scale(mean(ratio_log(td_logits[i], RatioDirection::p_over_m)), 0.5);
    total = total.valid() ? total + term : term;
  }
  return total;
}

Var admp_jsd_model_loss(const Model& model, const std::vector<LocalAdversary>& adversaries, Bindings& xi,
                        const JointSample& bottom_up, const JointSample& top_down) {
  for (std::size_t f : adversary_factors(model.graph())) {
    const bool found = std::any_of(adversaries.begin(), adversaries.end(),
                                   [f](const LocalAdversary& a) { return a.factor() == f; });
    if (!found) throw std::invalid_argument("no adversary for factor '" + model.graph().name(f) + "'");
  }
  std::vector<Var> td, bu;
  for (const LocalAdversary& adv : adversaries) {
    td.push_back(adv.logits(xi, model.gather(top_down, adv.slots())));
    bu.push_back(adv.logits(xi, model.gather(bottom_up, adv.slots())));
  }
  return jsd_model_loss(td, bu);
}

void require_explicit(const Model& model, const InverseFactorization& inv, const std::string& what) {
  const ModelGraph& g = model.graph();
  for (std::size_t v = 0; v < g.size(); ++v) {
    if (!model.generative(v).spec().explicit_density()) {
      throw std::invalid_argument(what + " needs explicit densities but factor '" + g.name(v) +
                                  "' is an implicit sampler; use admp-kl-intractable or an adversarial variant");
    }
  }
  for (const InverseFactor& f : inv.factors) {
    if (!model.inference_family(f.var).explicit_density()) {
      throw std::invalid_argument(what + " needs explicit densities but q(" + g.name(f.var) +
                                  "|...) is an implicit sampler; use an adversarial variant");
    }
  }
}

Var elbo_rows(const Model& model, Bindings& theta, Bindings& phi, const InverseFactorization& inv,
              const Evidence& evidence, std::size_t particles, Rng& rng, const std::string& tag) {
  require_explicit(model, inv, "the ELBO");
  JointSample joint = model.inference_sample(phi, inv, evidence, particles, rng, tag);
  if (!joint.discrete_draws.empty()) {
    throw std::invalid_argument("the ELBO needs reparametrizable latents; '" +
                                model.graph().name(joint.discrete_draws.front()) + "' is discrete");
  }
  if (joint.rows == 0) throw std::invalid_argument("elbo: empty sample set");
  Var total;
  for (std::size_t v = 0; v < model.graph().size(); ++v) {
    Var lp = model.factor_log_prob(theta, v, joint);
    total = total.valid() ? total + lp : lp;
  }
  for (const InverseFactor& f : inv.factors) total = total - model.inference_log_prob(phi, f, joint, tag);
  return total;
}

Var elbo(const Model& model, Bindings& theta, Bindings& phi, const InverseFactorization& inv,
         const Evidence& evidence, std::size_t particles, Rng& rng, const std::string& tag) {
  return mean(elbo_rows(model, theta, phi, inv, evidence, particles, rng, tag));
}

Var reconstruction_rows(const Model& model, Bindings& theta, const JointSample& joint) {
  Var total;
  for (std::size_t o : model.graph().observed()) {
    Var lp = model.factor_log_prob(theta, o, joint);
    total = total.valid() ? total + lp : lp;
  }
  if (!total.valid()) throw std::invalid_argument("model has no observed variables");
  return total;
}

std::vector<std::size_t> latent_block_slots(const ModelGraph& graph) {
  std::vector<std::size_t> slots = graph.latents();
  for (std::size_t o : graph.observed()) slots.push_back(o);
  return slots;
}

std::vector<std::size_t> observed_block_slots(const ModelGraph& graph) {
  std::vector<std::size_t> slots = graph.observed();
  for (std::size_t z : graph.latents()) slots.push_back(z);
  return slots;
}

Var kl_tractable_objective(const Model& model, Bindings& theta, const LocalAdversary& dz, Bindings& xi,
                           const JointSample& bottom_up) {
  Var rec = mean(reconstruction_rows(model, theta, bottom_up));
  Var kl = mean(ratio_log(dz.logits(xi, model.gather(bottom_up, dz.slots())), RatioDirection::q_over_p));
  return rec - kl;
}

Var kl_intractable_objective(const Model& model, const LocalAdversary& dz, const LocalAdversary& dx, Bindings& xi,
                             const JointSample& bottom_up) {
  Var lz = dz.logits(xi, model.gather(bottom_up, dz.slots()));
  Var lx = dx.logits(xi, model.gather(bottom_up, dx.slots()));
  return mean(lz) + mean(lx);
}

MixedReport mixed_equivalence_check(const Model& model, const ParamSet& theta, const ParamSet& phi,
                                    const Tensor& x, const DataLogDensity& log_qx, std::size_t samples,
                                    std::uint64_t seed, double h) {
  const ModelGraph& g = model.graph();
  const std::vector<std::size_t> observed = g.observed();
  if (observed.size() != 1) throw std::invalid_argument("mixed_equivalence_check: expects one observed variable");
  const std::size_t xo = observed[0];
  const InverseFactorization& inv = model.inverse();
  require_explicit(model, inv, "mixed_equivalence_check");

  Evidence evidence(g.size());
  evidence[xo] = x;
  std::vector<double> log_q_rows(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    std::vector<double> row(x.cols());
    for (std::size_t j = 0; j < x.cols(); ++j) row[j] = x(i, j);
    log_q_rows[i] = log_qx(row);
  }
  Tensor log_q({x.rows() * samples, 1});
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t k = 0; k < samples; ++k) log_q(i * samples + k, 0) = log_q_rows[i];

  // returns {l_elbo, l_kl}
  auto evaluate = [&](const ParamSet& th) {
    Tape tape;
    Bindings tb(tape, th, false), pb(tape, phi, false);
    Rng rng(seed);
    JointSample joint = model.inference_sample(pb, inv, evidence, samples, rng);
    Var lik = model.factor_log_prob(tb, xo, joint);
    Var prior_gap;
    for (std::size_t z : g.latents()) {
      Var lp = model.factor_log_prob(tb, z, joint);
      prior_gap = prior_gap.valid() ? prior_gap + lp : lp;
    }
    for (const InverseFactor& f : inv.factors) prior_gap = prior_gap - model.inference_log_prob(pb, f, joint);
    Var dx_logit = clamp(tape.constant(log_q) - lik, -30.0, 30.0);
    const double l_elbo = -mean(lik + prior_gap).item();
    const double l_kl = -mean(ratio_log(dx_logit, RatioDirection::q_over_p) + prior_gap).item();
    return std::pair{l_elbo, l_kl};
  };

  MixedReport r;
  std::tie(r.l_elbo, r.l_kl) = evaluate(theta);
  r.difference = r.l_kl - r.l_elbo;

  ParamSet trainable;
  for (const auto& [name, t] : theta)
    if (model.trainable(name)) trainable[name] = t;
  auto with = [&](const ParamSet& p) {
    ParamSet full = theta;
    for (const auto& [name, t] : p) full[name] = t;
    return full;
  };
  r.grad_elbo = finite_diff_grad([&](const ParamSet& p) { return evaluate(with(p)).first; }, trainable, h);
  r.grad_kl = finite_diff_grad([&](const ParamSet& p) { return evaluate(with(p)).second; }, trainable, h);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [name, ga] : r.grad_elbo) {
    const Tensor& gb = r.grad_kl.at(name);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      dot += ga[i] * gb[i];
      na += ga[i] * ga[i];
      nb += gb[i] * gb[i];
    }
  }
  r.gradient_cosine = (na > 0 && nb > 0) ? dot / std::sqrt(na * nb) : 0.0;
  return r;
}

namespace {

double squared_distance(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.cols(); ++c) {
    const double d = a(i, c) - b(j, c);
    s += d * d;
  }
  return s;
}

}  // namespace

double median_bandwidth(const Tensor& a, const Tensor& b, std::size_t max_points) {
  std::vector<std::pair<const Tensor*, std::size_t>> pool;
  const std::size_t total = a.rows() + b.rows();
  const std::size_t stride = std::max<std::size_t>(1, total / std::max<std::size_t>(1, max_points));
  for (std::size_t k = 0; k < total; k += stride) {
    if (k < a.rows()) pool.emplace_back(&a, k);
    else pool.emplace_back(&b, k - a.rows());
  }
  std::vector<double> d;
  for (std::size_t i = 0; i < pool.size(); ++i)
    for (std::size_t j = i + 1; j < pool.size(); ++j)
      d.push_back(std::sqrt(squared_distance(*pool[i].first, pool[i].second, *pool[j].first, pool[j].second)));
  if (d.empty()) return 1.0;
  std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
  const double med = d[d.size() / 2];
  return med > 0 ? med : 1.0;
}

double mmd_rbf(const Tensor& a, const Tensor& b, double bandwidth) {
  const std::size_t m = a.rows(), n = b.rows();
  if (m < 2 || n < 2) throw std::invalid_argument("mmd_rbf: need at least 2 samples per set");
  if (a.cols() != b.cols()) throw ShapeError("mmd_rbf: sample dimensions differ");
  if (bandwidth <= 0) bandwidth = median_bandwidth(a, b);
  const double gamma = 1.0 / (2.0 * bandwidth * bandwidth);
  auto k = [&](const Tensor& u, std::size_t i, const Tensor& v, std::size_t j) {
    return std::exp(-gamma * squared_distance(u, i, v, j));
  };
  if (m == n) {
    // paired U-statistic: h(i, j) = k(a_i, a_j) + k(b_i, b_j) - k(a_i, b_j) - k(a_j, b_i)
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        s += k(a, i, a, j) + k(b, i, b, j) - k(a, i, b, j) - k(a, j, b, i);
    return 2.0 * s / (static_cast<double>(n) * static_cast<double>(n - 1));
  }
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) saa += k(a, i, a, j);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) sbb += k(b, i, b, j);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) sab += k(a, i, b, j);
  const double dm = static_cast<double>(m), dn = static_cast<double>(n);
  return 2.0 * saa / (dm * (dm - 1)) + 2.0 * sbb / (dn * (dn - 1)) - 2.0 * sab / (dm * dn);
}

}  // namespace admp
