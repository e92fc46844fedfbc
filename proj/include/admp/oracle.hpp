#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "admp/graph.hpp"
#include "admp/model.hpp"

namespace admp {

// ---- conjugate Gaussian ----

struct GaussianPosterior {
  double mean = 0.0;
  double var = 1.0;
};

GaussianPosterior conjugate_gaussian_posterior(double prior_mean, double prior_var, double noise_var, double x);

double gaussian_kl(double m1, double v1, double m2, double v2);  // KL(N(m1,v1) || N(m2,v2))
double gaussian_log_density(double x, double mean, double var);

/// z ~ N(m, s^2), x | z ~ N(a z + c, sigma^2), read from a model whose
/// oracle block is linear_gaussian.
struct LinearGaussian {
  double prior_mean = 0.0;
  double prior_var = 1.0;
  double slope = 1.0;
  double offset = 0.0;
  double noise_var = 1.0;

  static LinearGaussian from(const Model& model, const ParamSet& theta);
  GaussianPosterior posterior(double x) const;
  double log_evidence(double x) const;
  /// Marginal of x.
  GaussianPosterior evidence() const;
};

// ---- enumerable discrete models ----

/// All variables categorical (binary counts as 2 states). `tables[v]` holds
/// p(x_v | pa(x_v)) with the parent configuration as the row (mixed radix,
/// first parent most significant) and the state as the column.
class EnumerableModel {
 public:
  static constexpr std::size_t kMaxJoint = 1000000;

  EnumerableModel(ModelGraph graph, std::vector<std::vector<double>> tables);

  const ModelGraph& graph() const { return graph_; }
  std::size_t states(std::size_t v) const { return states_[v]; }
  const std::vector<std::size_t>& all_states() const { return states_; }
  const std::vector<double>& table(std::size_t v) const { return tables_[v]; }
  std::size_t parent_configs(std::size_t v) const;
  double conditional(std::size_t v, std::size_t parent_config, std::size_t state) const;
  /// Row index of the parent configuration found in a full assignment.
  std::size_t parent_config(std::size_t v, const std::vector<std::size_t>& assignment) const;

 private:
  ModelGraph graph_;
  std::vector<std::size_t> states_;
  std::vector<std::vector<double>> tables_;
};

/// Joint table over all variables, index = mixed radix over declaration
/// order (first variable most significant).
struct Enumeration {
  std::vector<std::size_t> states;
  std::vector<double> joint;

  std::vector<std::size_t> decode(std::size_t index) const;
  std::size_t encode(const std::vector<std::size_t>& assignment) const;
  /// Marginal over `vars`, flattened in the order given.
  std::vector<double> marginal(const std::vector<std::size_t>& vars) const;
  /// p(vars | given = values), flattened over vars.
  std::vector<double> conditional(const std::vector<std::size_t>& vars, const std::vector<std::size_t>& given,
                                  const std::vector<std::size_t>& values) const;
  double log_evidence(const std::vector<std::size_t>& observed, const std::vector<std::size_t>& values) const;
};

Enumeration enumerate(const EnumerableModel& model);
/// Random tables with entries drawn from a Dirichlet(alpha) per row.
EnumerableModel random_enumerable(ModelGraph graph, const std::vector<std::size_t>& states, std::uint64_t seed,
                                  double alpha = 1.0);
/// Same graph and states, fresh random tables.
EnumerableModel random_tables_like(const EnumerableModel& model, std::uint64_t seed, double alpha = 1.0);

/// Divergence value with a distinguished infinity for p > 0 where q = 0.
struct Divergence {
  double value = 0.0;
  bool infinite = false;
};

Divergence discrete_kl(const std::vector<double>& p, const std::vector<double>& q);
double discrete_jsd(const std::vector<double>& p, const std::vector<double>& q);

/// Inference factors over the latents of an enumerable model: for each
/// latent, a table q(z | given) laid out like EnumerableModel tables.
struct DiscreteInverse {
  InverseFactorization inverse;
  std::vector<std::vector<double>> tables;  // parallel to inverse.factors
};

DiscreteInverse random_inverse(const EnumerableModel& model, const std::vector<std::size_t>& observed,
                               std::uint64_t seed, double alpha = 1.0);
/// The exact posterior written as inverse factors (exact because every
/// conditioning set d-separates its latent from the remaining context).
DiscreteInverse exact_inverse(const EnumerableModel& model, const std::vector<std::size_t>& observed);

/// E_q[log p(x, z) - log q(z | x)] by summation over latent states.
double exact_elbo(const EnumerableModel& model, const DiscreteInverse& q, const std::vector<std::size_t>& values);

/// Div_loc = sum over adversary tuples of (L_locM term with analytic
/// discriminator) + log 2, with both chains as exact joints over the same
/// variables.
double exact_div_loc(const ModelGraph& graph, const Enumeration& p, const Enumeration& q);

// ---- quadrature ----

enum class DivergenceKind { kl, jsd };

struct Grid1D {
  double lo = -8.0;
  double hi = 8.0;
  std::size_t points = 1 << 14;
};

struct Grid2D {
  Grid1D x;
  Grid1D y;
};

/// Grid covering +-8 standard deviations of both Gaussians.
Grid1D gaussian_grid(double m1, double s1, double m2, double s2, std::size_t points = 1 << 14);

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;  // |I_n - I_{n/2}| / 3
  std::string warning;          // set when error_estimate > 1e-4
};

using Density1D = std::function<double(double)>;
using Density2D = std::function<double(double, double)>;

QuadratureResult numeric_divergence(const Density1D& p, const Density1D& q, DivergenceKind kind, const Grid1D& grid);
QuadratureResult numeric_divergence(const Density2D& p, const Density2D& q, DivergenceKind kind, const Grid2D& grid);
/// KL(p || q) from log densities; stays finite where q underflows.
QuadratureResult numeric_kl_log(const Density1D& log_p, const Density1D& log_q, const Grid1D& grid);

// ---- posterior recovery ----

struct RecoveryRow {
  double x = 0.0;
  double oracle_mean = 0.0;
  double oracle_std = 0.0;
  double q_mean = 0.0;
  double q_std = 0.0;
  double kl = 0.0;   // KL(q || posterior)
  double mmd2 = 0.0;
  bool q_explicit = true;
};

struct RecoveryReport {
  std::vector<RecoveryRow> rows;
  double mean_kl = 0.0;
  double max_kl = 0.0;
  double max_mean_error = 0.0;
  double max_rel_mean_error = 0.0;
};

/// Compares the trained q(z | x) against the linear-Gaussian oracle on the
/// model's grid (or `grid` when nonempty).
RecoveryReport posterior_recovery_report(const Model& model, const ParamSet& theta, const ParamSet& phi,
                                         std::uint64_t seed, std::size_t samples = 10000,
                                         std::vector<double> grid = {});

}  // namespace admp
