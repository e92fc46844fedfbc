#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "admp/model.hpp"
#include "admp/spec_file.hpp"

using namespace admp;

namespace {

Model parse(const std::string& text) { return Model(parse_model_spec(text, "test")); }

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

const char* kTwoBinary = R"(model pair
variable a
  role latent
  support binary
variable b
  role observed
  support binary
factor a
  family bernoulli
  logits 0.4
factor b
  parents a
  family bernoulli
  hidden
  weight 1.5
  bias -0.7
)";

const char* kTinyScale = R"(model det
variable z
  role latent
variable x
  role observed
factor z
  family gaussian
  mean 1
  scale 1e-300
factor x
  parents z
  family gaussian
  hidden
  weight 1.5
  bias 0.5
  scale 1e-300
)";

const char* kCopyChain = R"(model copy
variable z2
  dim 2
  role latent
variable z1
  dim 2
  role latent
variable x
  dim 2
  role observed
factor z2
  family gaussian
factor z1
  parents z2
  family gaussian
factor x
  parents z1
  family gaussian
infer z1
  family implicit
  hidden
  weight 1 0 0 1 0 0 0 0
  bias 0 0
  fixed true
infer z2
  family implicit
  hidden
  weight 0 1 1 0 0 0 0 0
  bias 0 0
  fixed true
)";

const char* kLinGauss = R"(model lg
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
infer z
  family gaussian
  hidden 8
  scale_mode network
)";

}  // namespace

TEST(Ancestral, ZeroVarianceComposesMeans) {
  const Model m = parse(kTinyScale);
  Rng rng(1);
  const ParamSet theta = m.init_generative(rng);
  Tape t;
  Bindings b(t, theta);
  const JointSample s = m.ancestral_sample(b, 50, rng);
  const std::size_t z = *m.graph().find("z"), x = *m.graph().find("x");
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(s.at(z).value()[i], 1.0);
    EXPECT_EQ(s.at(x).value()[i], 2.0);
  }
}

TEST(Ancestral, RootStandardNormalMoments) {
  const Model m = parse(kLinGauss);
  Rng rng(2);
  const ParamSet theta = m.init_generative(rng);
  Tape t;
  Bindings b(t, theta);
  const std::size_t n = 100000;
  const Tensor z = m.ancestral_sample(b, n, rng).at(*m.graph().find("z")).value();
  double s = 0, ss = 0;
  for (double v : z.values()) s += v;
  const double mean = s / n;
  for (double v : z.values()) ss += (v - mean) * (v - mean);
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(ss / n, 1.0, 0.05);
}

TEST(Ancestral, DiscreteJointConvergesInTotalVariation) {
  const Model m = parse(kTwoBinary);
  Rng rng(3);
  const ParamSet theta = m.init_generative(rng);
  const double pa = sigmoid(0.4);
  const std::array<double, 2> pb = {sigmoid(-0.7), sigmoid(0.8)};
  std::array<double, 4> exact{};
  for (int a = 0; a < 2; ++a)
    for (int bb = 0; bb < 2; ++bb) exact[2 * a + bb] = (a ? pa : 1 - pa) * (bb ? pb[a] : 1 - pb[a]);

  Tape t;
  Bindings b(t, theta);
  const std::size_t n = 100000;
  const JointSample s = m.ancestral_sample(b, n, rng);
  const Tensor& av = s.at(*m.graph().find("a")).value();
  const Tensor& bv = s.at(*m.graph().find("b")).value();
  std::array<double, 4> freq{};
  for (std::size_t i = 0; i < n; ++i) freq[2 * static_cast<int>(av[i]) + static_cast<int>(bv[i])] += 1.0 / n;
  double tv = 0.0;
  for (int k = 0; k < 4; ++k) tv += 0.5 * std::abs(freq[k] - exact[k]);
  EXPECT_LT(tv, 0.02);
  EXPECT_EQ(s.discrete_draws.size(), 2u);
}

TEST(Inference, CopyNetworksPassParentsThrough) {
  const Model m = parse(kCopyChain);
  Rng rng(4);
  const ParamSet phi = m.init_inference({m.inverse()}, rng);
  const std::size_t x = *m.graph().find("x"), z1 = *m.graph().find("z1"), z2 = *m.graph().find("z2");
  Evidence ev(m.graph().size());
  ev[x] = rng.normal(7, 2);
  Tape t;
  Bindings b(t, phi);
  const JointSample s = m.inference_sample(b, m.inverse(), ev, 3, rng);
  ASSERT_EQ(s.rows, 21u);
  for (std::size_t r = 0; r < s.rows; ++r) {
    EXPECT_EQ(s.at(x).value()(r, 0), ev[x](r / 3, 0));
    EXPECT_EQ(s.at(z1).value()(r, 0), ev[x](r / 3, 0));
    EXPECT_EQ(s.at(z1).value()(r, 1), ev[x](r / 3, 1));
    EXPECT_EQ(s.at(z2).value()(r, 0), ev[x](r / 3, 1));
    EXPECT_EQ(s.at(z2).value()(r, 1), ev[x](r / 3, 0));
  }
}

TEST(Inference, ZeroParticlesIsEmpty) {
  const Model m = parse(kLinGauss);
  Rng rng(5);
  const ParamSet phi = m.init_inference({m.inverse()}, rng);
  Evidence ev(m.graph().size());
  ev[*m.graph().find("x")] = rng.normal(4, 1);
  Tape t;
  Bindings b(t, phi);
  const JointSample s = m.inference_sample(b, m.inverse(), ev, 0, rng);
  EXPECT_EQ(s.rows, 0u);
}

TEST(Inference, MissingObservedNamed) {
  const Model m = parse(kLinGauss);
  Rng rng(6);
  const ParamSet phi = m.init_inference({m.inverse()}, rng);
  Tape t;
  Bindings b(t, phi);
  try {
    m.inference_sample(b, m.inverse(), Evidence(m.graph().size()), 1, rng);
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("'x'"), std::string::npos);
  }
}

TEST(Inference, EmpiricalMeanMatchesMeanHead) {
  const Model m = parse(kLinGauss);
  Rng rng(7);
  const ParamSet phi = m.init_inference({m.inverse()}, rng);
  Evidence ev(m.graph().size());
  ev[*m.graph().find("x")] = Tensor::scalar(0.7);
  Tape t;
  Bindings b(t, phi);
  const std::size_t n = 100000;
  const JointSample s = m.inference_sample(b, m.inverse(), ev, n, rng);
  const InverseFactor& f = m.inverse().factors.front();
  const Head h = m.inference(f).head(b, t.constant(Tensor::scalar(0.7)), 1);
  const double mu = h.mean.item(), sd = std::exp(h.log_std.item());
  double sum = 0.0;
  for (double v : s.at(f.var).value().values()) sum += v;
  EXPECT_NEAR(sum / n, mu, 4.0 * sd / std::sqrt(static_cast<double>(n)));
}

TEST(Model, ConstantFactorsNotTrainable) {
  const Model m = parse(kCopyChain);
  Rng rng(8);
  for (const auto& [name, value] : m.init_inference({m.inverse()}, rng)) EXPECT_FALSE(m.trainable(name)) << name;
  for (const auto& [name, value] : m.init_generative(rng)) EXPECT_TRUE(m.trainable(name)) << name;
}

TEST(Model, FactorLogProbMatchesClosedForm) {
  const Model m = parse(kTinyScale);
  const Model lg = parse(kLinGauss);
  Rng rng(9);
  const ParamSet theta = lg.init_generative(rng);
  Tape t;
  Bindings b(t, theta);
  JointSample j;
  j.rows = 1;
  j.values.assign(2, Var());
  const std::size_t z = *lg.graph().find("z"), x = *lg.graph().find("x");
  j.values[z] = t.constant(Tensor::scalar(0.2));
  j.values[x] = t.constant(Tensor::scalar(1.1));
  const double mu = 1.5 * 0.2 + 0.5, sd = 0.75;
  const double expect = -0.5 * std::log(2 * M_PI) - std::log(sd) - 0.5 * (1.1 - mu) * (1.1 - mu) / (sd * sd);
  EXPECT_NEAR(lg.factor_log_prob(b, x, j).item(), expect, 1e-12);
  EXPECT_EQ(m.width(std::vector<std::size_t>{0, 1}), 2u);
}

TEST(Model, InferenceFamilyForUnknownVariableRejected) {
  EXPECT_THROW(parse(std::string(kLinGauss) + "infer q\n  family gaussian\n"), std::exception);
}
