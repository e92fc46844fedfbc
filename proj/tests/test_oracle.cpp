#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <numbers>

#include "admp/adversary.hpp"
#include "admp/oracle.hpp"
#include "admp/spec_file.hpp"
#include "graph_fixtures.hpp"

using namespace admp;
using namespace admp::fixtures;

namespace {

double pdf(double x, double m, double s = 1.0) { return std::exp(gaussian_log_density(x, m, s * s)); }

ModelGraph pair_graph() { return Builder().var("a").var("b", Role::observed).factor("a").factor("b", {"a"}).build(); }

// Random DAG with at least one latent and one observed variable.
ModelGraph mixed_dag(Rng& rng, std::size_t max_nodes) {
  for (;;) {
    const ModelGraph g = random_dag(rng, 2 + rng.index(max_nodes - 1), 0.5, 0.5);
    if (!g.latents().empty() && !g.observed().empty()) return g;
  }
}

const char* kLinGauss = R"(model lg
variable z
  role latent
variable x
  role observed
factor z
  family gaussian
  mean 0.3
  scale 0.8
factor x
  parents z
  family gaussian
  hidden
  weight 2
  bias -0.5
  scale 0.5
oracle linear_gaussian
  latent z
  observed x
  grid -2 2 5
)";

Model lingauss_with(double w, double b, double s) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "infer z\n  family gaussian\n  hidden\n  weight %.17g\n  bias %.17g\n"
                "  scale_mode learned\n  scale %.17g\n",
                w, b, s);
  return Model(parse_model_spec(std::string(kLinGauss) + buf, "test"));
}

}  // namespace

TEST(Conjugate, UnitExample) {
  const GaussianPosterior p = conjugate_gaussian_posterior(0, 1, 1, 2);
  EXPECT_DOUBLE_EQ(p.mean, 1.0);
  EXPECT_DOUBLE_EQ(p.var, 0.5);
}

TEST(Conjugate, UninformativeLikelihoodKeepsPrior) {
  const GaussianPosterior p = conjugate_gaussian_posterior(0.7, 2.0, 1e12, 5.0);
  EXPECT_NEAR(p.mean, 0.7, 1e-6);
  EXPECT_NEAR(p.var, 2.0, 1e-6);
}

TEST(Conjugate, FlatPriorFollowsObservation) {
  EXPECT_NEAR(conjugate_gaussian_posterior(0.0, 1e12, 0.5, 3.3).mean, 3.3, 1e-6);
}

TEST(Conjugate, NonpositiveVarianceRejected) {
  EXPECT_THROW(conjugate_gaussian_posterior(0, 0, 1, 0), std::invalid_argument);
  EXPECT_THROW(conjugate_gaussian_posterior(0, 1, -1, 0), std::invalid_argument);
}

TEST(Conjugate, LinearGaussianMatchesBayesByQuadrature) {
  const Model m = lingauss_with(0, 0, 1);
  Rng rng(1);
  const LinearGaussian lg = LinearGaussian::from(m, m.init_generative(rng));
  EXPECT_DOUBLE_EQ(lg.slope, 2.0);
  EXPECT_DOUBLE_EQ(lg.noise_var, 0.25);
  const double x = 0.9;
  double z0 = 0, z1 = 0, z2 = 0;
  const double h = 1e-3;
  for (double z = -8; z <= 8; z += h) {
    const double w = pdf(z, 0.3, 0.8) * pdf(x, 2 * z - 0.5, 0.5) * h;
    z0 += w;
    z1 += w * z;
    z2 += w * z * z;
  }
  const GaussianPosterior p = lg.posterior(x);
  EXPECT_NEAR(p.mean, z1 / z0, 1e-9);
  EXPECT_NEAR(p.var, z2 / z0 - (z1 / z0) * (z1 / z0), 1e-9);
  EXPECT_NEAR(lg.log_evidence(x), std::log(z0), 1e-9);
}

TEST(GaussianKl, ClosedForm) {
  EXPECT_DOUBLE_EQ(gaussian_kl(1, 1, 0, 1), 0.5);
  EXPECT_EQ(gaussian_kl(0.4, 2, 0.4, 2), 0.0);
}

TEST(Enumerate, IndependentFairCoins) {
  const ModelGraph g = Builder().var("a").var("b").factor("a").factor("b").build();
  const Enumeration e = enumerate(EnumerableModel(random_enumerable(g, {2, 2}, 1).graph(), {{0.5, 0.5}, {0.5, 0.5}}));
  ASSERT_EQ(e.joint.size(), 4u);
  for (double p : e.joint) EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(Enumerate, DeterministicChainForcesPath) {
  const EnumerableModel shape = random_enumerable(chain(), {2, 2, 2}, 2);
  const EnumerableModel m(shape.graph(), {{0, 1}, {1, 0, 0, 1}, {0, 1, 1, 0}});
  const Enumeration e = enumerate(m);
  for (std::size_t i = 0; i < e.joint.size(); ++i) {
    const auto a = e.decode(i);
    const bool forced = a == std::vector<std::size_t>{1, 1, 0};
    EXPECT_EQ(e.joint[i], forced ? 1.0 : 0.0);
  }
}

TEST(Enumerate, TablesRecoveredFromJoint) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const ModelGraph g = random_dag(rng, 3, 0.6, 0.0);
    const EnumerableModel m = random_enumerable(g, {2, 3, 2}, 100 + trial);
    const Enumeration e = enumerate(m);
    double total = 0.0;
    for (double p : e.joint) total += p;
    EXPECT_NEAR(total, 1.0, 1e-12);
    for (std::size_t v = 0; v < 3; ++v) {
      std::vector<std::size_t> vars = m.graph().parents(v);
      const auto pa = e.marginal(vars);
      vars.push_back(v);
      const auto joint = e.marginal(vars);
      for (std::size_t r = 0; r < m.parent_configs(v); ++r)
        for (std::size_t s = 0; s < m.states(v); ++s)
          EXPECT_NEAR(joint[r * m.states(v) + s] / pa[r], m.conditional(v, r, s), 1e-12);
    }
  }
}

TEST(Enumerate, SizeLimitReportsSize) {
  Builder b;
  for (int i = 0; i < 7; ++i) b.var("v" + std::to_string(i)).factor("v" + std::to_string(i));
  try {
    random_enumerable(b.build(), std::vector<std::size_t>(7, 10), 1);
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("10000000"), std::string::npos) << e.what();
  }
}

TEST(Enumerate, BadTablesRejected) {
  const EnumerableModel shape = random_enumerable(pair_graph(), {2, 2}, 4);
  EXPECT_THROW(EnumerableModel(shape.graph(), {{0.5, 0.6}, {1, 0, 0, 1}}), std::invalid_argument);
  EXPECT_THROW(EnumerableModel(shape.graph(), {{0.5, 0.5}, {1, 0}}), std::invalid_argument);
}

TEST(DiscreteDivergence, ZeroTimesLogZeroAndInfinity) {
  const Divergence a = discrete_kl({0.0, 1.0}, {0.5, 0.5});
  EXPECT_FALSE(a.infinite);
  EXPECT_DOUBLE_EQ(a.value, std::log(2.0));
  EXPECT_TRUE(discrete_kl({0.5, 0.5}, {1.0, 0.0}).infinite);
  EXPECT_DOUBLE_EQ(discrete_jsd({1.0, 0.0}, {0.0, 1.0}), std::log(2.0));
}

TEST(DivLoc, SingleFactorEqualsJsd) {
  const ModelGraph g = Builder().var("a", Role::observed).factor("a").build();
  for (std::uint64_t s = 0; s < 20; ++s) {
    const EnumerableModel pm = random_enumerable(g, {3}, s);
    const Enumeration p = enumerate(pm), q = enumerate(random_tables_like(pm, 100 + s));
    EXPECT_NEAR(exact_div_loc(pm.graph(), p, q), discrete_jsd(p.joint, q.joint), 1e-12);
  }
}

TEST(DivLoc, NonnegativeAndZeroExactlyAtEquality) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const ModelGraph g = random_dag(rng, 2 + rng.index(3), 0.5, 0.0);
    const EnumerableModel p = random_enumerable(g, std::vector<std::size_t>(g.size(), 3), 200 + trial);
    const Enumeration ep = enumerate(p);
    EXPECT_NEAR(exact_div_loc(p.graph(), ep, ep), 0.0, 1e-12);
    const EnumerableModel q = random_tables_like(p, 900 + trial);
    EXPECT_GT(exact_div_loc(p.graph(), ep, enumerate(q)), 1e-9);
    // perturb one factor only
    std::vector<std::vector<double>> tables;
    for (std::size_t v = 0; v < g.size(); ++v) tables.push_back(p.table(v));
    const std::size_t v = rng.index(g.size());
    tables[v] = q.table(v);
    EXPECT_GT(exact_div_loc(p.graph(), ep, enumerate(EnumerableModel(p.graph(), tables))), 1e-9);
  }
}

TEST(DivLoc, ExactPosteriorChainsAgree) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const ModelGraph g = mixed_dag(rng, 4);
    const EnumerableModel p = random_enumerable(g, std::vector<std::size_t>(g.size(), 2), 300 + trial);
    const Enumeration ep = enumerate(p);
    const DiscreteInverse q = exact_inverse(p, p.graph().observed());
    // the bottom-up joint p(x) q(z|x) equals p(x, z) when q is the exact posterior
    Enumeration eq = ep;
    for (std::size_t i = 0; i < eq.joint.size(); ++i) {
      const auto a = ep.decode(i);
      std::vector<std::size_t> xs;
      for (std::size_t o : p.graph().observed()) xs.push_back(a[o]);
      double v = std::exp(ep.log_evidence(p.graph().observed(), xs));
      for (std::size_t k = 0; k < q.inverse.factors.size(); ++k) {
        const InverseFactor& f = q.inverse.factors[k];
        std::size_t row = 0;
        for (std::size_t gv : f.given) row = row * p.states(gv) + a[gv];
        v *= q.tables[k][row * p.states(f.var) + a[f.var]];
      }
      eq.joint[i] = v;
    }
    for (std::size_t i = 0; i < eq.joint.size(); ++i) EXPECT_NEAR(eq.joint[i], ep.joint[i], 1e-12);
    EXPECT_NEAR(exact_div_loc(p.graph(), ep, eq), 0.0, 1e-12);
  }
}

TEST(ExactElbo, BoundedByLogEvidence) {
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const ModelGraph g = mixed_dag(rng, 4);
    const EnumerableModel p = random_enumerable(g, std::vector<std::size_t>(g.size(), 3), 400 + trial);
    const auto observed = p.graph().observed();
    std::vector<std::size_t> values;
    for (std::size_t o : observed) values.push_back(rng.index(3));
    const double evidence = enumerate(p).log_evidence(observed, values);
    EXPECT_LE(exact_elbo(p, random_inverse(p, observed, 500 + trial), values), evidence + 1e-9);
    EXPECT_NEAR(exact_elbo(p, exact_inverse(p, observed), values), evidence, 1e-9);
  }
}

TEST(ExactElbo, ValueCountMustMatch) {
  const EnumerableModel p = random_enumerable(pair_graph(), {2, 2}, 8);
  EXPECT_THROW(exact_elbo(p, exact_inverse(p, p.graph().observed()), {}), std::invalid_argument);
}

TEST(Quadrature, JsdOfIdenticalDensitiesIsZero) {
  auto p = [](double x) { return pdf(x, 0.5, 1.2); };
  EXPECT_NEAR(numeric_divergence(p, p, DivergenceKind::jsd, gaussian_grid(0.5, 1.2, 0.5, 1.2)).value, 0.0, 1e-10);
}

TEST(Quadrature, UnitGaussianKl) {
  const auto r = numeric_divergence([](double x) { return pdf(x, 1); }, [](double x) { return pdf(x, 0); },
                                    DivergenceKind::kl, gaussian_grid(1, 1, 0, 1));
  EXPECT_NEAR(r.value, 0.5, 1e-6);
  EXPECT_TRUE(r.warning.empty());
}

TEST(Quadrature, LogDomainKlMatches) {
  const auto r = numeric_kl_log([](double x) { return gaussian_log_density(x, 1, 4); },
                                [](double x) { return gaussian_log_density(x, -2, 0.01); }, gaussian_grid(1, 2, -2, 0.1));
  EXPECT_NEAR(r.value, gaussian_kl(1, 4, -2, 0.01), 1e-6);
}

TEST(Quadrature, JsdSymmetricAndBounded) {
  auto p = [](double x) { return pdf(x, 0); };
  auto q = [](double x) { return pdf(x, 3, 0.5); };
  const Grid1D g = gaussian_grid(0, 1, 3, 0.5);
  const double a = numeric_divergence(p, q, DivergenceKind::jsd, g).value;
  const double b = numeric_divergence(q, p, DivergenceKind::jsd, g).value;
  EXPECT_NEAR(a, b, 1e-10);
  EXPECT_LE(a, std::log(2.0));
  EXPECT_GE(numeric_divergence(q, p, DivergenceKind::kl, g).value, -1e-10);
}

TEST(Quadrature, JsdAgreesWithMonteCarloOnOptimalDiscriminator) {
  const double jsd = numeric_divergence([](double x) { return pdf(x, 0); }, [](double x) { return pdf(x, 4); },
                                        DivergenceKind::jsd, gaussian_grid(0, 1, 4, 1))
                         .value;
  Rng rng(9);
  const std::size_t n = 100000;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double xp = rng.normal(), xq = 4 + rng.normal();
    const double lp = optimal_logit(gaussian_log_density(xp, 0, 1), gaussian_log_density(xp, 4, 1));
    const double lq = optimal_logit(gaussian_log_density(xq, 0, 1), gaussian_log_density(xq, 4, 1));
    s += 0.5 * (-std::log1p(std::exp(-lp))) + 0.5 * (-std::log1p(std::exp(lq)));
  }
  EXPECT_NEAR(s / n + std::numbers::ln2, jsd, 0.02);
}

TEST(Quadrature, CoarseGridWarns) {
  const auto r = numeric_divergence([](double x) { return pdf(x, 0, 0.1); }, [](double x) { return pdf(x, 1, 0.1); },
                                    DivergenceKind::kl, Grid1D{-2, 3, 9});
  EXPECT_FALSE(r.warning.empty());
  auto flat = [](double) { return 1.0; };
  EXPECT_THROW(numeric_divergence(flat, flat, DivergenceKind::kl, Grid1D{0, 1, 1}), std::invalid_argument);
}

TEST(Quadrature, TwoDimensionalKlOfIndependentGaussians) {
  auto p = [](double x, double y) { return pdf(x, 0) * pdf(y, 1, 0.5); };
  auto q = [](double x, double y) { return pdf(x, 1) * pdf(y, 0, 1.0); };
  const Grid2D g{gaussian_grid(0, 1, 1, 1, 1 << 9), gaussian_grid(1, 0.5, 0, 1, 1 << 9)};
  EXPECT_NEAR(numeric_divergence(p, q, DivergenceKind::kl, g).value,
              gaussian_kl(0, 1, 1, 1) + gaussian_kl(1, 0.25, 0, 1), 1e-4);
}

TEST(Recovery, OraclePosteriorAsQ) {
  const Model base = lingauss_with(0, 0, 1);
  Rng rng(10);
  const LinearGaussian lg = LinearGaussian::from(base, base.init_generative(rng));
  const GaussianPosterior p0 = lg.posterior(0.0), p1 = lg.posterior(1.0);
  const Model m = lingauss_with(p1.mean - p0.mean, p0.mean, std::sqrt(p0.var));
  const ParamSet theta = m.init_generative(rng), phi = m.init_inference({m.inverse()}, rng);
  const RecoveryReport r = posterior_recovery_report(m, theta, phi, 11);
  ASSERT_EQ(r.rows.size(), 5u);
  EXPECT_LT(r.max_mean_error, 0.01);
  EXPECT_LT(r.max_kl, 1e-3);
}

TEST(Recovery, PriorAsQ) {
  const Model m = lingauss_with(0, 0.3, 0.8);
  Rng rng(12);
  const ParamSet theta = m.init_generative(rng), phi = m.init_inference({m.inverse()}, rng);
  const LinearGaussian lg = LinearGaussian::from(m, theta);
  const RecoveryReport r = posterior_recovery_report(m, theta, phi, 13);
  for (const RecoveryRow& row : r.rows) {
    const GaussianPosterior post = lg.posterior(row.x);
    EXPECT_NEAR(row.kl, gaussian_kl(0.3, 0.64, post.mean, post.var), 0.02) << row.x;
  }
}

TEST(Recovery, UntrainedNetworkGivesFiniteFields) {
  const Model m(parse_model_spec(std::string(kLinGauss) + "infer z\n  family gaussian\n  hidden 8\n", "test"));
  Rng rng(14);
  const ParamSet theta = m.init_generative(rng), phi = m.init_inference({m.inverse()}, rng);
  const RecoveryReport r = posterior_recovery_report(m, theta, phi, 15, 2000);
  for (const RecoveryRow& row : r.rows)
    for (double v : {row.q_mean, row.q_std, row.kl, row.mmd2}) EXPECT_TRUE(std::isfinite(v));
  EXPECT_TRUE(std::isfinite(r.mean_kl));
}

TEST(Recovery, ModelWithoutOracleRejected) {
  const Model m(parse_model_spec(R"(model plain
variable z
  role latent
variable x
  role observed
factor z
  family gaussian
factor x
  parents z
  family gaussian
)",
                                 "test"));
  Rng rng(16);
  EXPECT_THROW(posterior_recovery_report(m, m.init_generative(rng), m.init_inference({m.inverse()}, rng), 1),
               std::invalid_argument);
}
