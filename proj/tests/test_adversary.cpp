#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "admp/adversary.hpp"
#include "admp/gradcheck.hpp"
#include "admp/optim.hpp"
#include "admp/oracle.hpp"

using namespace admp;

namespace {

double normal_pdf(double x, double m) { return std::exp(-0.5 * (x - m) * (x - m)) / std::sqrt(2 * M_PI); }

Tensor shifted_normal(Rng& rng, std::size_t n, double m) {
  Tensor t = rng.normal(n, 1);
  for (double& v : t.values()) v += m;
  return t;
}

double loss_value(const LocalAdversary& adv, const ParamSet& xi, const Tensor& td, const Tensor& bu,
                  GradSet* grads = nullptr) {
  Tape t;
  Bindings b(t, xi);
  Var l = loss_locD(adv.logits(b, t.constant(td)), adv.logits(b, t.constant(bu)));
  if (grads) *grads = b.gradients(t.backward(l));
  return l.item();
}

// Fits the adversary with Adam on fresh batches from N(m_td, 1) and N(m_bu, 1).
void fit(const LocalAdversary& adv, ParamSet& xi, double m_td, double m_bu, Rng& rng, int steps = 1500) {
  OptimizerState state;
  for (int i = 0; i < steps; ++i) {
    GradSet g;
    loss_value(adv, xi, shifted_normal(rng, 256, m_td), shifted_normal(rng, 256, m_bu), &g);
    adam_step(xi, g, state, {5e-3});
  }
}

LocalAdversary small_adversary() { return LocalAdversary("xi/d_x", 0, {0}, 1, {{16}}); }

}  // namespace

TEST(Discriminate, ZeroNetworkGivesHalf) {
  const LocalAdversary adv("xi/d_x", 0, {0}, 3);
  Rng rng(1);
  ParamSet xi;
  adv.init(xi, rng);
  for (auto& [name, value] : xi) value = Tensor(value.shape());
  const Tensor d = discriminate(adv, xi, rng.normal(20, 3));
  for (double v : d.values()) EXPECT_EQ(v, 0.5);
}

TEST(Discriminate, OutputsStrictlyInsideUnitInterval) {
  const LocalAdversary adv("xi/d_x", 0, {0}, 1, {{}});
  ParamSet xi{{"xi/d_x/W0", Tensor::scalar(1e6)}, {"xi/d_x/b0", Tensor::scalar(0)}};
  const Tensor d = discriminate(adv, xi, Tensor::matrix({{-5}, {5}}));
  EXPECT_GT(d[0], 0.0);
  EXPECT_LT(d[1], 1.0);
  EXPECT_NEAR(d[1], 1.0 / (1.0 + std::exp(-30.0)), 1e-15);
}

TEST(Discriminate, WidthMismatchRejected) {
  const LocalAdversary adv("xi/d_x", 0, {0}, 2);
  Rng rng(2);
  ParamSet xi;
  adv.init(xi, rng);
  EXPECT_THROW(discriminate(adv, xi, rng.normal(4, 3)), ShapeError);
}

TEST(Discriminate, InvariantToRowOrder) {
  const LocalAdversary adv("xi/d_x", 0, {0}, 2);
  Rng rng(3);
  ParamSet xi;
  adv.init(xi, rng);
  const Tensor x = rng.normal(30, 2);
  std::vector<std::size_t> perm(30);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  Tensor xp({30, 2});
  for (std::size_t i = 0; i < 30; ++i)
    for (std::size_t j = 0; j < 2; ++j) xp(i, j) = x(perm[i], j);
  const Tensor d = discriminate(adv, xi, x), dp = discriminate(adv, xi, xp);
  for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(dp[i], d[perm[i]]);
}

TEST(Discriminate, SeparatesDistantGaussians) {
  const LocalAdversary adv = small_adversary();
  Rng rng(4);
  ParamSet xi;
  adv.init(xi, rng);
  fit(adv, xi, 4.0, -4.0, rng, 500);
  EXPECT_GT(discriminate(adv, xi, Tensor::scalar(4.0)).item(), 0.95);
}

TEST(Discriminate, IdenticalSourcesStayNearHalf) {
  const LocalAdversary adv = small_adversary();
  Rng rng(5);
  ParamSet xi;
  adv.init(xi, rng);
  fit(adv, xi, 0.0, 0.0, rng, 500);
  const Tensor d = discriminate(adv, xi, rng.normal(2000, 1));
  double dev = 0.0;
  for (double v : d.values()) dev += std::abs(v - 0.5) / 2000;
  EXPECT_LT(dev, 0.05);
}

TEST(LossLocD, HalfEverywhereIsTwoLogTwo) {
  Tape t;
  Var z = t.constant(Tensor({5, 1}));
  EXPECT_NEAR(loss_locD(z, z).item(), 2.0 * std::log(2.0), 1e-15);
}

TEST(LossLocD, PerfectDiscriminationAtClamp) {
  Tape t;
  const double l = loss_locD(t.constant(Tensor({3, 1}, 30.0)), t.constant(Tensor({3, 1}, -30.0))).item();
  EXPECT_NEAR(l, 2.0 * std::log1p(std::exp(-30.0)), 1e-25);
  EXPECT_NEAR(l, 1.87e-13, 0.01e-13);
}

TEST(LossLocD, EmptyBatchRejected) {
  Tape t;
  EXPECT_THROW(loss_locD(t.constant(Tensor({0, 1})), t.constant(Tensor({3, 1}))), std::invalid_argument);
}

TEST(LossLocD, GradientMatchesFiniteDifferences) {
  const LocalAdversary adv("xi/d_x", 0, {0}, 2, {{8, 8}});
  Rng rng(6);
  ParamSet xi;
  adv.init(xi, rng);
  const Tensor td = rng.normal(40, 2), bu = rng.normal(40, 2);
  GradSet analytic;
  loss_value(adv, xi, td, bu, &analytic);
  const auto report = check_gradients([&](const ParamSet& p) { return loss_value(adv, p, td, bu); }, xi, analytic);
  EXPECT_LT(max_error(report), 1e-4);
}

TEST(LossLocD, TrainedLossApproachesJsdBound) {
  const LocalAdversary adv = small_adversary();
  Rng rng(7);
  ParamSet xi;
  adv.init(xi, rng);
  fit(adv, xi, 0.0, 2.0, rng);
  const double jsd = numeric_divergence([](double x) { return normal_pdf(x, 0.0); },
                                        [](double x) { return normal_pdf(x, 2.0); }, DivergenceKind::jsd,
                                        gaussian_grid(0, 1, 2, 1))
                         .value;
  const double bound = 2.0 * std::log(2.0) - 2.0 * jsd;
  const double held_out = loss_value(adv, xi, shifted_normal(rng, 100000, 0.0), shifted_normal(rng, 100000, 2.0));
  EXPECT_GT(held_out, bound - 0.01);
  EXPECT_LT(held_out, bound + 0.05);
}

TEST(RatioLog, HalfGivesLogHalfAndZero) {
  EXPECT_DOUBLE_EQ(ratio_log(0.0, RatioDirection::p_over_m), std::log(0.5));
  EXPECT_DOUBLE_EQ(ratio_log(0.0, RatioDirection::q_over_m), std::log(0.5));
  EXPECT_EQ(ratio_log(0.0, RatioDirection::p_over_q), 0.0);
  EXPECT_EQ(ratio_log(0.0, RatioDirection::q_over_p), 0.0);
}

TEST(RatioLog, LogitIdentity) { EXPECT_EQ(ratio_log(2.0, RatioDirection::p_over_q), 2.0); }

TEST(RatioLog, DirectionsAreConsistent) {
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const double l = 10.0 * rng.normal();
    EXPECT_EQ(ratio_log(l, RatioDirection::p_over_q), -ratio_log(l, RatioDirection::q_over_p));
    EXPECT_NEAR(ratio_log(l, RatioDirection::p_over_m) - ratio_log(l, RatioDirection::q_over_m), l, 1e-12);
    EXPECT_NEAR(std::exp(ratio_log(l, RatioDirection::p_over_m)) + std::exp(ratio_log(l, RatioDirection::q_over_m)),
                1.0, 1e-12);
  }
}

TEST(RatioLog, TensorFormMatchesScalar) {
  Tape t;
  const Tensor l = Tensor::matrix({{-3.0}, {0.5}, {7.0}});
  for (auto dir : {RatioDirection::p_over_m, RatioDirection::q_over_m, RatioDirection::p_over_q,
                   RatioDirection::q_over_p}) {
    const Tensor r = ratio_log(t.constant(l), dir).value();
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(r[i], ratio_log(l[i], dir), 1e-15);
  }
}

TEST(RatioLog, OptimalDiscriminatorRecoversGaussianKl) {
  // E_q log((1 - D)/D) = KL(q || p) = 0.5 for p = N(0,1), q = N(1,1)
  Rng rng(9);
  const std::size_t n = 100000;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = 1.0 + rng.normal();
    const double logit = optimal_logit(gaussian_log_density(x, 0, 1), gaussian_log_density(x, 1, 1));
    sum += ratio_log(logit, RatioDirection::q_over_p);
  }
  EXPECT_NEAR(sum / n, 0.5, 0.02);
}

TEST(AnalyticDiscriminator, EqualDensitiesGiveHalf) {
  auto p = [](const std::vector<double>& x) { return normal_pdf(x[0], 0.0); };
  const Discriminator d = analytic_optimal_discriminator(p, p);
  for (double x : {-3.0, 0.0, 2.5}) EXPECT_DOUBLE_EQ(d({x}), 0.5);
}

TEST(AnalyticDiscriminator, GaussianPairExamples) {
  const Discriminator d = analytic_optimal_discriminator([](const std::vector<double>& x) { return normal_pdf(x[0], 0); },
                                                         [](const std::vector<double>& x) { return normal_pdf(x[0], 4); });
  EXPECT_DOUBLE_EQ(d({2.0}), 0.5);
  EXPECT_NEAR(d({0.0}), 1.0 / (1.0 + std::exp(-8.0)), 1e-12);
  EXPECT_NEAR(d({0.0}), 0.99966, 1e-5);
}

TEST(AnalyticDiscriminator, BothZeroIsHalf) {
  auto zero = [](const std::vector<double>&) { return 0.0; };
  EXPECT_EQ(analytic_optimal_discriminator(zero, zero)({1.0}), 0.5);
}

TEST(AnalyticDiscriminator, OptimalLogitMatchesDensityRatio) {
  EXPECT_DOUBLE_EQ(optimal_logit(std::log(0.3), std::log(0.1)), std::log(3.0));
  const double d = 1.0 / (1.0 + std::exp(-optimal_logit(std::log(0.3), std::log(0.1))));
  EXPECT_NEAR(d, 0.3 / 0.4, 1e-15);
}
