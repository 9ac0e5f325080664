#include <gtest/gtest.h>

#include <atomic>

#include "modal/pipeline.hpp"

using namespace modal;

TEST(Parallel, CoversEveryIndexAndRethrows) {
  std::vector<int> hit(50, 0);
  parallel_for(hit.size(), 3, [&](std::size_t i) { hit[i] += 1; });
  EXPECT_EQ(std::count(hit.begin(), hit.end(), 1), 50);
  EXPECT_THROW(parallel_for(5, 2,
                            [](std::size_t i) {
                              if (i == 3) throw Error(Errc::numeric_error, "x");
                            }),
               Error);
}

TEST(Seeds, DistinctPerIndex) {
  EXPECT_NE(sequence_seed(1, 0), sequence_seed(1, 1));
  EXPECT_NE(sequence_seed(1, 0), sequence_seed(2, 0));
  EXPECT_EQ(sequence_seed(5, 3), sequence_seed(5, 3));
}

TEST(ExtentError, LargestComponent) {
  EXPECT_DOUBLE_EQ(relative_extent_error(Vec3(1, 1.5, 1), Vec3(1, 2, 1)), 0.25);
  EXPECT_EQ(relative_extent_error(Vec3(1, 2, 3), Vec3(1, 2, 3)), 0.0);
}

TEST(Identity, ZeroNoiseIsPerfect) {
  const auto tax = synthetic_taxonomy();
  IdentityExperimentConfig cfg;
  cfg.sequences = 1;
  const auto r = run_identity_experiment(cfg, tax, experiment_grid());
  EXPECT_NEAR(r.pq.pq, 1.0, 1e-9);
  EXPECT_NEAR(r.lstq.s_assoc, 1.0, 1e-9);
  EXPECT_NEAR(r.lstq.lstq, 1.0, 1e-9);
}

TEST(Extent, SmallCorpusRuns) {
  const auto tax = synthetic_taxonomy();
  ExtentExperimentConfig cfg;
  cfg.sequences = 1;
  cfg.scene.sweep_count = 4;
  const auto r = run_extent_experiment(cfg, tax, experiment_grid());
  ASSERT_EQ(r.strategies.size(), 4u);
  EXPECT_GT(r.score(ExtentVariant::max).pq.pq, 0.0);
  EXPECT_FALSE(r.cwm.empty());
}

TEST(Membership, TinyExperimentRuns) {
  const auto tax = synthetic_taxonomy();
  MembershipExperimentConfig cfg;
  cfg.train_sequences = 1;
  cfg.test_sequences = 1;
  cfg.scene.sweep_count = 2;
  cfg.train.epochs = 1;
  cfg.variants = {FeatureSet::geometry};
  const auto r = run_membership_experiment(cfg, tax, experiment_grid());
  EXPECT_GT(r.nn.total, 0);
  EXPECT_EQ(r.variant(FeatureSet::geometry).loss_trace.size(), 1u);
  EXPECT_THROW(r.variant(FeatureSet::full), Error);
}
