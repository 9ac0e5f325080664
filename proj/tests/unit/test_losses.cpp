#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "modal/losses.hpp"
#include "oracles.hpp"

using namespace modal;

TEST(Focal, KnownValues) {
  // Peak cell at p = 0.5 with alpha 2: -(0.5^2) log 0.5.
  const auto v = focal_loss(std::vector<double>{0.5}, std::vector<double>{1.0});
  EXPECT_NEAR(v.value, -0.25 * std::log(0.5), 1e-15);
  // No peaks: normalizer is 1.
  const auto w = focal_loss(std::vector<double>{0.2}, std::vector<double>{0.5});
  EXPECT_NEAR(w.value, -std::pow(0.5, 4) * 0.04 * std::log(0.8), 1e-15);
  EXPECT_THROW(focal_loss(std::vector<double>{1.0}, std::vector<double>{1.0}), Error);
  EXPECT_THROW(focal_loss(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0}), Error);
}

TEST(Focal, NearPerfectIsSmall) {
  const auto v = focal_loss(std::vector<double>{0.999999, 1e-6}, std::vector<double>{1.0, 0.0});
  EXPECT_LT(v.value, 1e-8);
}

TEST(CrossEntropy, MaskAndIgnore) {
  const std::vector<double> logits = {2.0, 0.0, 0.0, 2.0, 5.0, 5.0};
  const std::vector<ClassId> tgt = {0, 1, 0};
  // Voxel 0 has ignore target, voxel 2 is masked out, so only voxel 1 counts.
  const std::vector<std::uint8_t> mask = {1, 1, 0};
  const auto v = masked_cross_entropy(logits, 2, tgt, mask);
  EXPECT_NEAR(v.value, std::log(1.0 + std::exp(-2.0)), 1e-12);
  const auto none = masked_cross_entropy(logits, 2, tgt, std::vector<std::uint8_t>{0, 0, 0});
  EXPECT_TRUE(none.degenerate);
  EXPECT_EQ(none.value, 0.0);
}

TEST(CrossEntropy, ConfidentCorrectIsTiny) {
  const std::vector<double> logits = {0.0, 20.0, 0.0};
  const auto v = masked_cross_entropy(logits, 3, std::vector<ClassId>{1},
                                      std::vector<std::uint8_t>{1}, 99);
  EXPECT_LT(v.value, 1e-8);
}

TEST(L1, MaskedMean) {
  const std::vector<double> p = {1.0, 2.0, 5.0}, t = {0.0, 4.0, 5.0};
  EXPECT_DOUBLE_EQ(l1_loss(p, t).value, 1.0);
  EXPECT_DOUBLE_EQ(l1_loss(p, t, std::vector<std::uint8_t>{0, 1, 0}).value, 2.0);
  EXPECT_THROW(l1_loss(p, t, std::vector<std::uint8_t>{0, 0, 0}), Error);
}

TEST(Bce, ClampsAndMatchesLogits) {
  const std::vector<double> t = {1.0, 0.0, 1.0};
  const std::vector<double> z = {0.3, -1.2, 4.0};
  std::vector<double> p;
  for (double v : z) p.push_back(1.0 / (1.0 + std::exp(-v)));
  EXPECT_NEAR(bce_loss(p, t).value, bce_with_logits(z, t).value, 1e-12);
  EXPECT_TRUE(std::isfinite(bce_loss(std::vector<double>{0.0}, std::vector<double>{1.0}).value));
  EXPECT_TRUE(std::isfinite(bce_with_logits(std::vector<double>{-800.0}, std::vector<double>{1.0}).value));
}

TEST(Gradients, FiniteDifferences) {
  const std::vector<double> p = {0.2, 0.7, 0.45, 0.9}, y = {1.0, 0.3, 0.0, 1.0};
  const auto f = [&](const std::vector<double>& x) { return focal_loss(x, y).value; };
  const auto a = focal_loss(p, y).gradient;
  const auto n = oracle::finite_difference(f, p, 1e-6);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_TRUE(oracle::gradients_agree(a[i], n[i], 1e-4));
}

TEST(Total, WeightsAndMissingTrack) {
  LossParts parts{1.0, 2.0, 3.0, std::nullopt};
  EXPECT_DOUBLE_EQ(total_loss(parts), 6.0);
  parts.track = 4.0;
  EXPECT_DOUBLE_EQ(total_loss(parts, {0.5, 1.0, 1.0, 0.25}), 6.5);
  parts.seg = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(total_loss(parts), Error);
}
