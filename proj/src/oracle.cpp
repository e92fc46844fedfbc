#include "admp/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "admp/objectives.hpp"

namespace admp {

GaussianPosterior conjugate_gaussian_posterior(double prior_mean, double prior_var, double noise_var, double x) {
  if (!(prior_var > 0) || !(noise_var > 0)) throw std::invalid_argument("conjugate posterior: variances must be positive");
  GaussianPosterior post;
  post.var = 1.0 / (1.0 / prior_var + 1.0 / noise_var);
  post.mean = post.var * (prior_mean / prior_var + x / noise_var);
  return post;
}

double gaussian_kl(double m1, double v1, double m2, double v2) {
  return 0.5 * (std::log(v2 / v1) + (v1 + (m1 - m2) * (m1 - m2)) / v2 - 1.0);
}

double gaussian_log_density(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + d * d / var);
}

LinearGaussian LinearGaussian::from(const Model& model, const ParamSet& theta) {
  const auto& o = model.spec().oracle;
  if (!o || o->kind != "linear_gaussian") throw std::invalid_argument("model has no linear_gaussian oracle");
  auto get = [&](const std::string& name) {
    auto it = theta.find(name);
    if (it == theta.end()) throw std::invalid_argument("oracle: missing parameter '" + name + "'");
    return it->second[0];
  };
  const std::string z = "theta/" + o->latent, x = "theta/" + o->observed;
  LinearGaussian lg;
  lg.prior_mean = get(z + "/mean");
  lg.prior_var = std::exp(2.0 * get(z + "/log_std"));
  lg.slope = get(x + "/net/W0");
  lg.offset = get(x + "/net/b0");
  lg.noise_var = std::exp(2.0 * get(x + "/log_std"));
  return lg;
}

GaussianPosterior LinearGaussian::posterior(double x) const {
  if (slope == 0.0) return {prior_mean, prior_var};
  // y = (x - c) / a is a direct noisy observation of z with variance sigma^2 / a^2
  return conjugate_gaussian_posterior(prior_mean, prior_var, noise_var / (slope * slope), (x - offset) / slope);
}

GaussianPosterior LinearGaussian::evidence() const {
  return {slope * prior_mean + offset, slope * slope * prior_var + noise_var};
}

double LinearGaussian::log_evidence(double x) const {
  const GaussianPosterior e = evidence();
  return gaussian_log_density(x, e.mean, e.var);
}

// ---- enumerable models ----

namespace {

std::size_t state_count(const VariableDecl& v) {
  switch (v.support.kind) {
    case Support::Kind::binary:
      if (v.dim != 1) break;
      return 2;
    case Support::Kind::categorical: return v.support.categories;
    case Support::Kind::real: break;
  }
  throw std::invalid_argument("variable '" + v.name + "' is not a single categorical or binary variable");
}

std::size_t config_index(const std::vector<std::size_t>& vars, const std::vector<std::size_t>& states,
                         const std::vector<std::size_t>& assignment) {
  std::size_t idx = 0;
  for (std::size_t v : vars) idx = idx * states[v] + assignment[v];
  return idx;
}

std::vector<double> dirichlet_row(std::size_t k, double alpha, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::mt19937_64 engine(rng.next_u64());
  std::vector<double> row(k);
  double total = 0.0;
  for (double& r : row) total += (r = gamma(engine) + 1e-12);
  for (double& r : row) r /= total;
  return row;
}

}  // namespace

EnumerableModel::EnumerableModel(ModelGraph graph, std::vector<std::vector<double>> tables)
    : graph_(std::move(graph)), tables_(std::move(tables)) {
  double size = 1.0;
  for (std::size_t v = 0; v < graph_.size(); ++v) {
    states_.push_back(state_count(graph_.variable(v)));
    size *= static_cast<double>(states_.back());
  }
  if (size > static_cast<double>(kMaxJoint)) {
    throw std::invalid_argument("joint table has " + std::to_string(static_cast<std::uint64_t>(size)) +
                                " entries, more than " + std::to_string(kMaxJoint));
  }
  if (tables_.size() != graph_.size()) throw std::invalid_argument("need one table per variable");
  for (std::size_t v = 0; v < graph_.size(); ++v) {
    const std::size_t rows = parent_configs(v), k = states_[v];
    if (tables_[v].size() != rows * k) {
      throw std::invalid_argument("table for '" + graph_.name(v) + "' needs " + std::to_string(rows * k) + " entries");
    }
    for (std::size_t r = 0; r < rows; ++r) {
      double total = 0.0;
      for (std::size_t s = 0; s < k; ++s) {
        const double p = tables_[v][r * k + s];
        if (!(p >= 0)) throw std::invalid_argument("negative probability in table for '" + graph_.name(v) + "'");
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-12) {
        throw std::invalid_argument("table row for '" + graph_.name(v) + "' sums to " + std::to_string(total));
      }
    }
  }
}

std::size_t EnumerableModel::parent_configs(std::size_t v) const {
  std::size_t n = 1;
  for (std::size_t p : graph_.parents(v)) n *= states_[p];
  return n;
}

double EnumerableModel::conditional(std::size_t v, std::size_t parent_config, std::size_t state) const {
  return tables_[v][parent_config * states_[v] + state];
}

std::size_t EnumerableModel::parent_config(std::size_t v, const std::vector<std::size_t>& assignment) const {
  return config_index(graph_.parents(v), states_, assignment);
}

std::vector<std::size_t> Enumeration::decode(std::size_t index) const {
  std::vector<std::size_t> a(states.size());
  for (std::size_t k = states.size(); k-- > 0;) {
    a[k] = index % states[k];
    index /= states[k];
  }
  return a;
}

std::size_t Enumeration::encode(const std::vector<std::size_t>& assignment) const {
  std::size_t idx = 0;
  for (std::size_t k = 0; k < states.size(); ++k) idx = idx * states[k] + assignment[k];
  return idx;
}

std::vector<double> Enumeration::marginal(const std::vector<std::size_t>& vars) const {
  std::size_t n = 1;
  for (std::size_t v : vars) n *= states[v];
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < joint.size(); ++i) out[config_index(vars, states, decode(i))] += joint[i];
  return out;
}

std::vector<double> Enumeration::conditional(const std::vector<std::size_t>& vars,
                                             const std::vector<std::size_t>& given,
                                             const std::vector<std::size_t>& values) const {
  std::size_t n = 1;
  for (std::size_t v : vars) n *= states[v];
  std::vector<double> out(n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < joint.size(); ++i) {
    const auto a = decode(i);
    bool match = true;
    for (std::size_t k = 0; k < given.size() && match; ++k) match = a[given[k]] == values[k];
    if (!match) continue;
    out[config_index(vars, states, a)] += joint[i];
    total += joint[i];
  }
  if (total <= 0.0) throw std::domain_error("conditioning event has probability zero");
  for (double& p : out) p /= total;
  return out;
}

double Enumeration::log_evidence(const std::vector<std::size_t>& observed,
                                 const std::vector<std::size_t>& values) const {
  double total = 0.0;
  for (std::size_t i = 0; i < joint.size(); ++i) {
    const auto a = decode(i);
    bool match = true;
    for (std::size_t k = 0; k < observed.size() && match; ++k) match = a[observed[k]] == values[k];
    if (match) total += joint[i];
  }
  return std::log(total);
}

Enumeration enumerate(const EnumerableModel& model) {
  Enumeration e;
  e.states = model.all_states();
  std::size_t n = 1;
  for (std::size_t s : e.states) n *= s;
  e.joint.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = e.decode(i);
    double p = 1.0;
    for (std::size_t v = 0; v < a.size(); ++v) p *= model.conditional(v, model.parent_config(v, a), a[v]);
    e.joint[i] = p;
  }
  return e;
}

EnumerableModel random_enumerable(ModelGraph graph, const std::vector<std::size_t>& states, std::uint64_t seed,
                                  double alpha) {
  GraphDecl decl = graph.decl();
  if (states.size() != decl.variables.size()) throw std::invalid_argument("need a state count per variable");
  for (std::size_t v = 0; v < states.size(); ++v) {
    decl.variables[v].dim = 1;
    decl.variables[v].support = Support::categorical(states[v]);
  }
  ModelGraph g = ModelGraph::from(decl);
  Rng rng(seed);
  std::vector<std::vector<double>> tables(g.size());
  for (std::size_t v = 0; v < g.size(); ++v) {
    std::size_t rows = 1;
    for (std::size_t p : g.parents(v)) rows *= states[p];
    for (std::size_t r = 0; r < rows; ++r) {
      const auto row = dirichlet_row(states[v], alpha, rng);
      tables[v].insert(tables[v].end(), row.begin(), row.end());
    }
  }
  return EnumerableModel(g, std::move(tables));
}

EnumerableModel random_tables_like(const EnumerableModel& model, std::uint64_t seed, double alpha) {
  return random_enumerable(model.graph(), model.all_states(), seed, alpha);
}

Divergence discrete_kl(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("discrete_kl: size mismatch");
  Divergence d;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return {std::numeric_limits<double>::infinity(), true};
    d.value += p[i] * std::log(p[i] / q[i]);
  }
  return d;
}

double discrete_jsd(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("discrete_jsd: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0) s += 0.5 * p[i] * std::log(p[i] / m);
    if (q[i] > 0) s += 0.5 * q[i] * std::log(q[i] / m);
  }
  return s;
}

namespace {

std::size_t given_configs(const EnumerableModel& model, const std::vector<std::size_t>& given) {
  std::size_t n = 1;
  for (std::size_t v : given) n *= model.states(v);
  return n;
}

}  // namespace

DiscreteInverse random_inverse(const EnumerableModel& model, const std::vector<std::size_t>& observed,
                               std::uint64_t seed, double alpha) {
  DiscreteInverse q;
  q.inverse = derive_inverse_factorization(model.graph(), observed);
  Rng rng(seed);
  for (const InverseFactor& f : q.inverse.factors) {
    std::vector<double> table;
    for (std::size_t r = 0; r < given_configs(model, f.given); ++r) {
      const auto row = dirichlet_row(model.states(f.var), alpha, rng);
      table.insert(table.end(), row.begin(), row.end());
    }
    q.tables.push_back(std::move(table));
  }
  return q;
}

DiscreteInverse exact_inverse(const EnumerableModel& model, const std::vector<std::size_t>& observed) {
  DiscreteInverse q;
  q.inverse = derive_inverse_factorization(model.graph(), observed);
  const Enumeration e = enumerate(model);
  for (const InverseFactor& f : q.inverse.factors) {
    std::vector<double> table;
    const std::size_t k = model.states(f.var);
    for (std::size_t r = 0; r < given_configs(model, f.given); ++r) {
      std::vector<std::size_t> values(f.given.size());
      std::size_t rem = r;
      for (std::size_t j = f.given.size(); j-- > 0;) {
        values[j] = rem % model.states(f.given[j]);
        rem /= model.states(f.given[j]);
      }
      std::vector<double> row;
      try {
        row = e.conditional({f.var}, f.given, values);
      } catch (const std::domain_error&) {
        row.assign(k, 1.0 / static_cast<double>(k));
      }
      table.insert(table.end(), row.begin(), row.end());
    }
    q.tables.push_back(std::move(table));
  }
  return q;
}

double exact_elbo(const EnumerableModel& model, const DiscreteInverse& q, const std::vector<std::size_t>& values) {
  const ModelGraph& g = model.graph();
  const auto& observed = q.inverse.observed;
  if (values.size() != observed.size()) throw std::invalid_argument("exact_elbo: one value per observed variable");
  std::vector<std::size_t> latents;
  for (std::size_t v = 0; v < g.size(); ++v)
    if (!std::binary_search(observed.begin(), observed.end(), v)) latents.push_back(v);
  std::size_t n = 1;
  for (std::size_t z : latents) n *= model.states(z);
  std::vector<std::size_t> a(g.size(), 0);
  for (std::size_t k = 0; k < observed.size(); ++k) a[observed[k]] = values[k];
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t rem = i;
    for (std::size_t j = latents.size(); j-- > 0;) {
      a[latents[j]] = rem % model.states(latents[j]);
      rem /= model.states(latents[j]);
    }
    double log_q = 0.0;
    bool zero = false;
    for (std::size_t f = 0; f < q.inverse.factors.size() && !zero; ++f) {
      const InverseFactor& fac = q.inverse.factors[f];
      const double p = q.tables[f][config_index(fac.given, model.all_states(), a) * model.states(fac.var) + a[fac.var]];
      if (p <= 0) zero = true;
      else log_q += std::log(p);
    }
    if (zero) continue;
    double log_p = 0.0;
    for (std::size_t v = 0; v < g.size(); ++v) log_p += std::log(model.conditional(v, model.parent_config(v, a), a[v]));
    total += std::exp(log_q) * (log_p - log_q);
  }
  return total;
}

double exact_div_loc(const ModelGraph& graph, const Enumeration& p, const Enumeration& q) {
  double total = 0.0;
  for (std::size_t v : adversary_factors(graph)) {
    std::vector<std::size_t> slots{v};
    for (std::size_t pa : graph.parents(v)) slots.push_back(pa);
    const auto pt = p.marginal(slots), qt = q.marginal(slots);
    double term = 0.0;
    for (std::size_t i = 0; i < pt.size(); ++i) {
      if (pt[i] + qt[i] <= 0) continue;
      const double d = pt[i] / (pt[i] + qt[i]);
      if (qt[i] > 0) term += 0.5 * qt[i] * std::log1p(-d);
      if (pt[i] > 0) term += 0.5 * pt[i] * std::log(d);
    }
    total += term + std::numbers::ln2;
  }
  return total;
}

// ---- quadrature ----

Grid1D gaussian_grid(double m1, double s1, double m2, double s2, std::size_t points) {
  return {std::min(m1 - 8 * s1, m2 - 8 * s2), std::max(m1 + 8 * s1, m2 + 8 * s2), points};
}

namespace {

double integrand(double p, double q, DivergenceKind kind) {
  if (kind == DivergenceKind::kl) {
    if (p <= 0) return 0.0;
    if (q <= 0) return std::numeric_limits<double>::infinity();
    return p * std::log(p / q);
  }
  const double m = 0.5 * (p + q);
  double s = 0.0;
  if (p > 0) s += 0.5 * p * std::log(p / m);
  if (q > 0) s += 0.5 * q * std::log(q / m);
  return s;
}

std::size_t intervals(const Grid1D& g) {
  if (g.points < 2 || !(g.hi > g.lo)) throw std::invalid_argument("quadrature grid needs at least 2 points on a nonempty range");
  return g.points + (g.points % 2);  // even, so the half grid lines up
}

QuadratureResult finish(double full, double half) {
  QuadratureResult r;
  r.value = full;
  r.error_estimate = std::abs(full - half) / 3.0;
  if (!(r.error_estimate <= 1e-4)) {
    r.warning = "grid may be too coarse: estimated truncation error " + std::to_string(r.error_estimate);
  }
  return r;
}

}  // namespace

QuadratureResult numeric_divergence(const Density1D& p, const Density1D& q, DivergenceKind kind, const Grid1D& grid) {
  const std::size_t n = intervals(grid);
  const double h = (grid.hi - grid.lo) / static_cast<double>(n);
  double full = 0.0, half = 0.0;
  for (std::size_t i = 0; i <= n; ++i) {
    const double x = grid.lo + h * static_cast<double>(i);
    const double f = integrand(p(x), q(x), kind);
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    full += w * f;
    if (i % 2 == 0) half += w * f;
  }
  return finish(full * h, half * 2.0 * h);
}

QuadratureResult numeric_kl_log(const Density1D& log_p, const Density1D& log_q, const Grid1D& grid) {
  const std::size_t n = intervals(grid);
  const double h = (grid.hi - grid.lo) / static_cast<double>(n);
  double full = 0.0, half = 0.0;
  for (std::size_t i = 0; i <= n; ++i) {
    const double x = grid.lo + h * static_cast<double>(i);
    const double lp = log_p(x);
    double f = 0.0;
    if (std::isfinite(lp)) {
      const double lq = log_q(x);
      f = std::isfinite(lq) ? std::exp(lp) * (lp - lq) : std::numeric_limits<double>::infinity();
    }
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    full += w * f;
    if (i % 2 == 0) half += w * f;
  }
  return finish(full * h, half * 2.0 * h);
}

QuadratureResult numeric_divergence(const Density2D& p, const Density2D& q, DivergenceKind kind, const Grid2D& grid) {
  const std::size_t nx = intervals(grid.x), ny = intervals(grid.y);
  const double hx = (grid.x.hi - grid.x.lo) / static_cast<double>(nx);
  const double hy = (grid.y.hi - grid.y.lo) / static_cast<double>(ny);
  double full = 0.0, half = 0.0;
  for (std::size_t i = 0; i <= nx; ++i) {
    const double x = grid.x.lo + hx * static_cast<double>(i);
    const double wx = (i == 0 || i == nx) ? 0.5 : 1.0;
    for (std::size_t j = 0; j <= ny; ++j) {
      const double y = grid.y.lo + hy * static_cast<double>(j);
      const double wy = (j == 0 || j == ny) ? 0.5 : 1.0;
      const double f = integrand(p(x, y), q(x, y), kind);
      full += wx * wy * f;
      if (i % 2 == 0 && j % 2 == 0) half += wx * wy * f;
    }
  }
  return finish(full * hx * hy, half * 4.0 * hx * hy);
}

// ---- posterior recovery ----

RecoveryReport posterior_recovery_report(const Model& model, const ParamSet& theta, const ParamSet& phi,
                                         std::uint64_t seed, std::size_t samples, std::vector<double> grid) {
  const LinearGaussian lg = LinearGaussian::from(model, theta);
  const OracleSpec& o = *model.spec().oracle;
  if (grid.empty()) {
    for (std::size_t i = 0; i < o.grid_points; ++i) {
      const double t = o.grid_points == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(o.grid_points - 1);
      grid.push_back(o.grid_lo + t * (o.grid_hi - o.grid_lo));
    }
  }
  const ModelGraph& g = model.graph();
  const std::size_t zi = g.index_of(o.latent), xi = g.index_of(o.observed);
  const InverseFactorization& inv = model.inverse();
  const InverseFactor* qz = inv.find(zi);
  if (!qz) throw std::invalid_argument("oracle latent has no inference factor");
  const bool q_explicit = model.inference_family(zi).explicit_density();

  RecoveryReport report;
  Rng rng(seed);
  for (double x : grid) {
    RecoveryRow row;
    row.x = x;
    const GaussianPosterior post = lg.posterior(x);
    row.oracle_mean = post.mean;
    row.oracle_std = std::sqrt(post.var);
    row.q_explicit = q_explicit;

    Tape tape;
    Bindings pb(tape, phi, false);
    Evidence ev(g.size());
    ev[xi] = Tensor::matrix({{x}});
    JointSample joint = model.inference_sample(pb, inv, ev, samples, rng);
    const Tensor& z = joint.at(zi).value();
    double s = 0.0, ss = 0.0;
    for (double v : z.values()) s += v;
    row.q_mean = s / static_cast<double>(samples);
    for (double v : z.values()) ss += (v - row.q_mean) * (v - row.q_mean);
    row.q_std = std::sqrt(ss / static_cast<double>(samples > 1 ? samples - 1 : 1));

    double qm = row.q_mean, qs = row.q_std;
    if (q_explicit && model.inference_family(zi).kind == FamilyKind::gaussian) {
      const Conditional c = model.inference(*qz);
      Head h = c.head(pb, model.gather(joint, qz->given), 1);
      qm = h.mean.value()[0];
      qs = std::exp(h.log_std.value()[0]);
    }
    if (qs > 0 && std::isfinite(qs)) {
      const Density1D lq = [&](double t) { return gaussian_log_density(t, qm, qs * qs); };
      const Density1D lp = [&](double t) { return gaussian_log_density(t, post.mean, post.var); };
      row.kl = numeric_kl_log(lq, lp, gaussian_grid(qm, qs, post.mean, row.oracle_std)).value;
    } else {
      row.kl = std::numeric_limits<double>::infinity();
    }

    const std::size_t m = std::min<std::size_t>(samples, 1000);
    if (m >= 2) {
      Tensor qa({m, 1}), pb2({m, 1});
      for (std::size_t i = 0; i < m; ++i) {
        qa[i] = z[i * (samples / m)];
        pb2[i] = post.mean + row.oracle_std * rng.normal();
      }
      row.mmd2 = mmd_rbf(qa, pb2);
    }

    report.max_kl = std::max(report.max_kl, row.kl);
    report.mean_kl += row.kl / static_cast<double>(grid.size());
    const double err = std::abs(row.q_mean - row.oracle_mean);
    report.max_mean_error = std::max(report.max_mean_error, err);
    report.max_rel_mean_error =
        std::max(report.max_rel_mean_error, err / std::max(std::abs(row.oracle_mean), row.oracle_std));
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace admp
