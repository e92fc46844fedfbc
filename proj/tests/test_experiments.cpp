#include <gtest/gtest.h>

#include "admp/experiments.hpp"
#include "admp/spec_file.hpp"

using namespace admp;

namespace {

const std::string kModels = ADMP_MODELS_DIR;

TrainConfig small(Variant v) {
  TrainConfig c;
  c.variant = v;
  c.minibatch = 8;
  c.particles_K = 8;
  c.metric_samples = 50;
  c.metrics_every = 5;
  c.adversary.hidden = {8};
  return c;
}

const GradcheckRow& row(const std::vector<GradcheckRow>& rows, const std::string& group) {
  for (const auto& r : rows)
    if (r.group == group) return r;
  throw std::out_of_range(group);
}

}  // namespace

TEST(Gradcheck, EveryVariantPassesOnShippedModels) {
  for (const char* name : {"lingauss", "chain", "discrete"}) {
    const Model m(load_model_spec(kModels + "/" + name + ".model"));
    const Dataset data = load_dataset(m, kModels);
    for (Variant v : all_variants()) {
      const Trainer t(m, small(v), data);
      const auto rows = run_gradcheck(t, 3, 3);
      EXPECT_TRUE(gradcheck_passed(rows)) << name << " " << to_string(v);
      for (const auto& r : rows) {
        if (r.status == "pass") {
          EXPECT_LT(r.max_rel_error, kGradcheckTolerance) << name << " " << r.group;
        }
      }
    }
  }
}

TEST(Gradcheck, UnusedGroupsReportedNotApplicable) {
  const Model m(load_model_spec(kModels + "/lingauss.model"));
  const Dataset data = load_dataset(m, kModels);
  const auto gan = run_gradcheck(Trainer(m, small(Variant::gan), data), 1, 2);
  EXPECT_EQ(row(gan, "phi").status, "n/a");
  EXPECT_EQ(row(gan, "theta").status, "pass");
  const auto elbo = run_gradcheck(Trainer(m, small(Variant::elbo), data), 1, 2);
  EXPECT_EQ(row(elbo, "xi").status, "n/a");
  EXPECT_GT(row(elbo, "phi").checked, 0u);
}

TEST(Gradcheck, WrongSignIsCaught) {
  const Model m(load_model_spec(kModels + "/chain.model"));
  const Trainer t(m, small(Variant::admp_jsd_loc), load_dataset(m, kModels));
  for (const char* group : {"theta", "phi", "xi"}) {
    const auto rows = run_gradcheck(t, 2, 3, group);
    EXPECT_FALSE(gradcheck_passed(rows)) << group;
    EXPECT_EQ(row(rows, group).status, "fail");
    EXPECT_FALSE(row(rows, group).worst.empty());
  }
}

TEST(Compare, ConfigHashIgnoresSeedOnly) {
  TrainConfig a = small(Variant::elbo), b = a;
  b.seed = 99;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.lr_phi = 0.5;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Compare, CellsOrderedAndSharedHash) {
  const Model m(load_model_spec(kModels + "/lingauss.model"));
  TrainConfig base = small(Variant::elbo);
  base.iterations = 4;
  const auto cells =
      run_compare(m, load_dataset(m, kModels), base, {Variant::elbo, Variant::admp_kl_tractable}, {1, 2}, 2);
  ASSERT_EQ(cells.size(), 4u);
  EXPECT_EQ(cells[0].variant, Variant::elbo);
  EXPECT_EQ(cells[1].seed, 2u);
  EXPECT_EQ(cells[2].variant, Variant::admp_kl_tractable);
  EXPECT_EQ(cells[0].config_hash, cells[1].config_hash);
  for (const auto& c : cells) {
    EXPECT_EQ(c.status, "ok") << c.note;
    EXPECT_TRUE(c.has_oracle);
    EXPECT_TRUE(std::isfinite(c.oracle_kl));
  }
}

TEST(Compare, ThreadCountDoesNotChangeResults) {
  const Model m(load_model_spec(kModels + "/lingauss.model"));
  TrainConfig base = small(Variant::elbo);
  base.iterations = 3;
  const Dataset data = load_dataset(m, kModels);
  const auto a = run_compare(m, data, base, {Variant::elbo, Variant::gan}, {1, 2}, 1);
  const auto b = run_compare(m, data, base, {Variant::elbo, Variant::gan}, {1, 2}, 3);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].mmd2, b[i].mmd2);
    EXPECT_EQ(a[i].oracle_kl, b[i].oracle_kl);
  }
}

TEST(Compare, IncompatibleVariantSkipped) {
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
data
  source self
  count 20
)"));
  TrainConfig base = small(Variant::elbo);
  base.iterations = 2;
  const auto cells = run_compare(m, load_dataset(m), base, {Variant::elbo, Variant::admp_kl_intractable}, {1}, 1);
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_EQ(cells[0].status, "skipped");
  EXPECT_FALSE(cells[0].note.empty());
  EXPECT_EQ(cells[1].status, "ok");
}
