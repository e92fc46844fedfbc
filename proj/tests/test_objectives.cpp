#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>

#include "admp/objectives.hpp"
#include "admp/oracle.hpp"
#include "admp/spec_file.hpp"

using namespace admp;

namespace {

const std::string kModels = ADMP_MODELS_DIR;

const char* kGenerative = R"(model lg
variable z
  role latent
variable x
  role observed
factor z
  family gaussian
factor x
  parents z
  family gaussian
  hidden
  weight 1.5
  bias 0.5
  scale 0.75
oracle linear_gaussian
  latent z
  observed x
)";

Model with_inference(const std::string& infer) { return Model(parse_model_spec(kGenerative + infer, "test")); }

std::string affine_infer(double w, double b, double s) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "infer z\n  family gaussian\n  hidden\n  weight %.17g\n  bias %.17g\n"
                "  scale_mode learned\n  scale %.17g\n",
                w, b, s);
  return buf;
}

Tensor constant_rows(std::size_t n, double v) { return Tensor({n, 1}, v); }

void zero(ParamSet& p) {
  for (auto& [name, value] : p) value = Tensor(value.shape());
}

}  // namespace

TEST(GanValue, HalfEverywhere) {
  EXPECT_NEAR(gan_value(Tensor({4, 1}, 0.5), Tensor({6, 1}, 0.5)), -2.0 * std::log(2.0), 1e-15);
  Tape t;
  EXPECT_NEAR(gan_value(t.constant(Tensor({4, 1})), t.constant(Tensor({6, 1}))).item(), -std::log(4.0), 1e-15);
}

TEST(GanValue, LogitFormMatchesProbabilityForm) {
  Rng rng(1);
  const Tensor a = rng.normal(10, 1), b = rng.normal(12, 1);
  auto sig = [](Tensor t) {
    for (double& v : t.values()) v = 1.0 / (1.0 + std::exp(-v));
    return t;
  };
  Tape t;
  EXPECT_NEAR(gan_value(t.constant(a), t.constant(b)).item(), gan_value(sig(a), sig(b)), 1e-12);
}

TEST(GanValue, OptimalDiscriminatorGivesJsdForm) {
  Rng rng(2);
  const std::size_t n = 100000;
  Tensor dd({n, 1}), dg({n, 1});
  auto d = [](double x) {
    return 1.0 / (1.0 + std::exp(-optimal_logit(gaussian_log_density(x, 0, 1), gaussian_log_density(x, 2, 1))));
  };
  for (std::size_t i = 0; i < n; ++i) {
    dd[i] = d(rng.normal());
    dg[i] = d(2.0 + rng.normal());
  }
  const double jsd = numeric_divergence([](double x) { return std::exp(gaussian_log_density(x, 0, 1)); },
                                        [](double x) { return std::exp(gaussian_log_density(x, 2, 1)); },
                                        DivergenceKind::jsd, gaussian_grid(0, 1, 2, 1))
                         .value;
  EXPECT_NEAR(gan_value(dd, dg), 2.0 * jsd - std::log(4.0), 0.02);
}

TEST(GanValue, SameDistributionOptimumIsMinusLogFour) {
  EXPECT_NEAR(gan_value(Tensor({3, 1}, 0.5), Tensor({3, 1}, 0.5)), -std::log(4.0), 1e-15);
}

TEST(JsdModelLoss, HalfEverywhereOnChain) {
  const Model m(load_model_spec(kModels + "/chain.model"));
  Rng rng(3);
  const ParamSet theta = m.init_generative(rng), phi = m.init_inference({m.inverse()}, rng);
  const auto advs = local_adversaries(m, {});
  ASSERT_EQ(advs.size(), 2u);
  ParamSet xi;
  for (const auto& a : advs) a.init(xi, rng);
  zero(xi);
  Tape t;
  Bindings tb(t, theta), pb(t, phi), xb(t, xi, false);
  const std::size_t x = *m.graph().find("x");
  Evidence ev(m.graph().size());
  ev[x] = rng.normal(16, 2);
  const JointSample bu = m.inference_sample(pb, m.inverse(), ev, 1, rng);
  const JointSample td = m.ancestral_sample(tb, 16, rng);
  EXPECT_NEAR(admp_jsd_model_loss(m, advs, xb, bu, td).item(), 2.0 * std::log(0.5), 1e-15);
}

TEST(JsdModelLoss, MissingAdversaryRejected) {
  const Model m(load_model_spec(kModels + "/chain.model"));
  Rng rng(4);
  const ParamSet theta = m.init_generative(rng);
  auto advs = local_adversaries(m, {});
  advs.pop_back();
  ParamSet xi;
  for (const auto& a : advs) a.init(xi, rng);
  Tape t;
  Bindings tb(t, theta), xb(t, xi, false);
  const JointSample td = m.ancestral_sample(tb, 4, rng);
  EXPECT_THROW(admp_jsd_model_loss(m, advs, xb, td, td), std::invalid_argument);
}

TEST(JsdModelLoss, SingleFactorWithOptimalDiscriminatorIsJsd) {
  Rng rng(5);
  const std::size_t n = 100000;
  Tensor td_logit({n, 1}), bu_logit({n, 1});
  auto logit = [](double x) { return optimal_logit(gaussian_log_density(x, 0, 1), gaussian_log_density(x, 1.5, 1)); };
  for (std::size_t i = 0; i < n; ++i) {
    td_logit[i] = logit(rng.normal());
    bu_logit[i] = logit(1.5 + rng.normal());
  }
  Tape t;
  const double loss = jsd_model_loss({t.constant(td_logit)}, {t.constant(bu_logit)}).item();
  const double jsd = numeric_divergence([](double x) { return std::exp(gaussian_log_density(x, 0, 1)); },
                                        [](double x) { return std::exp(gaussian_log_density(x, 1.5, 1)); },
                                        DivergenceKind::jsd, gaussian_grid(0, 1, 1.5, 1))
                         .value;
  EXPECT_NEAR(loss + std::log(2.0), jsd, 0.02);
}

TEST(AdversaryWiring, OnlyMaximalTuples) {
  const Model chain(load_model_spec(kModels + "/chain.model"));
  const auto f = adversary_factors(chain.graph());
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(chain.graph().name(f[0]), "z1");
  EXPECT_EQ(chain.graph().name(f[1]), "x");
  const auto advs = local_adversaries(chain, {});
  EXPECT_EQ(advs[1].prefix(), "xi/d_x");
  EXPECT_EQ(advs[1].input_width(), 4u);
}

TEST(Elbo, ExactPosteriorGivesLogEvidence) {
  const Model gen = with_inference("");
  Rng rng(6);
  const ParamSet theta0 = gen.init_generative(rng);
  const LinearGaussian lg = LinearGaussian::from(gen, theta0);
  const GaussianPosterior p0 = lg.posterior(0.0), p1 = lg.posterior(1.0);
  const Model m = with_inference(affine_infer(p1.mean - p0.mean, p0.mean, std::sqrt(p0.var)));
  const ParamSet theta = m.init_generative(rng), phi = m.init_inference({m.inverse()}, rng);
  Tape t;
  Bindings tb(t, theta), pb(t, phi);
  Evidence ev(2);
  ev[*m.graph().find("x")] = Tensor::scalar(1.3);
  const double e = elbo(m, tb, pb, m.inverse(), ev, 100000, rng).item();
  EXPECT_NEAR(e, lg.log_evidence(1.3), 0.01);
}

TEST(Elbo, PriorAsPosteriorLeavesReconstruction) {
  const Model m = with_inference(affine_infer(0.0, 0.0, 1.0));
  Rng rng(7);
  const ParamSet theta = m.init_generative(rng), phi = m.init_inference({m.inverse()}, rng);
  const std::size_t x = *m.graph().find("x");
  Evidence ev(2);
  ev[x] = constant_rows(5, 0.4);
  Tape t;
  Bindings tb(t, theta), pb(t, phi);
  Rng a(11), b(11);
  const double e = elbo(m, tb, pb, m.inverse(), ev, 20, a).item();
  const JointSample s = m.inference_sample(pb, m.inverse(), ev, 20, b);
  EXPECT_NEAR(e, mean(m.factor_log_prob(tb, x, s)).item(), 1e-12);
}

TEST(Elbo, BelowLogEvidence) {
  const Model m = with_inference(affine_infer(0.2, 0.1, 0.8));
  Rng rng(8);
  const ParamSet theta = m.init_generative(rng), phi = m.init_inference({m.inverse()}, rng);
  const LinearGaussian lg = LinearGaussian::from(m, theta);
  Tape t;
  Bindings tb(t, theta), pb(t, phi);
  Evidence ev(2);
  ev[*m.graph().find("x")] = Tensor::scalar(-0.6);
  EXPECT_LT(elbo(m, tb, pb, m.inverse(), ev, 50000, rng).item(), lg.log_evidence(-0.6));
}

TEST(Elbo, ImplicitFactorRejected) {
  const Model m(parse_model_spec(R"(model imp
variable z
  role latent
variable x
  role observed
factor z
  family gaussian
factor x
  parents z
  family implicit
)",
                                 "test"));
  Rng rng(9);
  const ParamSet theta = m.init_generative(rng), phi = m.init_inference({m.inverse()}, rng);
  Tape t;
  Bindings tb(t, theta), pb(t, phi);
  Evidence ev(2);
  ev[*m.graph().find("x")] = Tensor::scalar(0);
  try {
    elbo(m, tb, pb, m.inverse(), ev, 1, rng);
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("admp-kl-intractable"), std::string::npos);
  }
}

TEST(KlObjectives, NeutralAdversariesLeaveReconstruction) {
  const Model m = with_inference(affine_infer(0.3, 0.0, 0.9));
  Rng rng(10);
  const ParamSet theta = m.init_generative(rng), phi = m.init_inference({m.inverse()}, rng);
  const ModelGraph& g = m.graph();
  const LocalAdversary dz("xi/d_z", *g.find("z"), latent_block_slots(g), 2);
  const LocalAdversary dx("xi/d_x", *g.find("x"), observed_block_slots(g), 2);
  ParamSet xi;
  dz.init(xi, rng);
  dx.init(xi, rng);
  zero(xi);
  Tape t;
  Bindings tb(t, theta), pb(t, phi), xb(t, xi, false);
  Evidence ev(2);
  ev[*g.find("x")] = rng.normal(8, 1);
  const JointSample bu = m.inference_sample(pb, m.inverse(), ev, 2, rng);
  EXPECT_NEAR(kl_tractable_objective(m, tb, dz, xb, bu).item(), mean(reconstruction_rows(m, tb, bu)).item(), 1e-14);
  EXPECT_EQ(kl_intractable_objective(m, dz, dx, xb, bu).item(), 0.0);
}

TEST(MixedCheck, GradientsAgreeOnLinearGaussian) {
  const Model m = with_inference(affine_infer(0.5, -0.2, 0.5));
  Rng rng(12);
  const ParamSet theta = m.init_generative(rng), phi = m.init_inference({m.inverse()}, rng);
  const Tensor x = rng.normal(20, 1);
  const MixedReport r = mixed_equivalence_check(
      m, theta, phi, x, [](const std::vector<double>& v) { return gaussian_log_density(v[0], 0.0, 1.0); }, 500, 3);
  EXPECT_GT(r.gradient_cosine, 0.99);
  EXPECT_FALSE(r.grad_elbo.empty());
}

TEST(MixedCheck, DifferenceIsDataTermIndependentOfTheta) {
  const Model m = with_inference(affine_infer(0.5, -0.2, 0.5));
  Rng rng(13);
  ParamSet theta = m.init_generative(rng);
  const ParamSet phi = m.init_inference({m.inverse()}, rng);
  const Tensor x = constant_rows(4, 0.3);
  auto log_qx = [](const std::vector<double>& v) { return gaussian_log_density(v[0], 0.3, 0.01); };
  const double d0 = mixed_equivalence_check(m, theta, phi, x, log_qx, 50, 4).difference;
  EXPECT_NEAR(d0, log_qx({0.3}), 1e-6);
  for (auto& [name, value] : theta)
    for (double& v : value.values()) v += 0.05;
  EXPECT_NEAR(mixed_equivalence_check(m, theta, phi, x, log_qx, 50, 4).difference, d0, 1e-6);
}

TEST(MixedCheck, ConstantGenerativeModelHasZeroGradients) {
  const Model m(parse_model_spec(R"(model frozen
variable z
  role latent
variable x
  role observed
factor z
  family gaussian
  fixed true
factor x
  parents z
  family gaussian
  hidden
  weight 1.5
  bias 0.5
  scale 0.75
  fixed true
)" + affine_infer(0.5, -0.2, 0.5),
                                 "test"));
  Rng rng(17);
  const ParamSet theta = m.init_generative(rng), phi = m.init_inference({m.inverse()}, rng);
  const MixedReport r = mixed_equivalence_check(
      m, theta, phi, rng.normal(5, 1), [](const std::vector<double>& v) { return gaussian_log_density(v[0], 0, 1); },
      20, 5);
  for (const GradSet* g : {&r.grad_elbo, &r.grad_kl})
    for (const auto& [name, value] : *g)
      for (double v : value.values()) EXPECT_EQ(v, 0.0) << name;
}

TEST(Mmd, IdenticalListsGiveZero) {
  Rng rng(14);
  const Tensor a = rng.normal(300, 2);
  EXPECT_LT(std::abs(mmd_rbf(a, a, 1.0)), 1e-12);
}

TEST(Mmd, SameDistributionNearZero) {
  Rng rng(15);
  EXPECT_LT(std::abs(mmd_rbf(rng.normal(10000, 1), rng.normal(10000, 1))), 0.005);
}

TEST(Mmd, ShiftedDistributionLarge) {
  Rng rng(16);
  Tensor b = rng.normal(10000, 1);
  for (double& v : b.values()) v += 3.0;
  EXPECT_GT(mmd_rbf(rng.normal(10000, 1), b, 1.0), 0.5);
}

TEST(Mmd, TooFewSamplesRejected) {
  EXPECT_THROW(mmd_rbf(Tensor({1, 1}), Tensor({5, 1})), std::invalid_argument);
}

TEST(Mmd, MedianBandwidthOfKnownSet) {
  EXPECT_DOUBLE_EQ(median_bandwidth(Tensor::matrix({{0}, {1}}), Tensor::matrix({{3}})), 2.0);
}
