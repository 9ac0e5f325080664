#include <gtest/gtest.h>

#include "modal/membership.hpp"
#include "modal/synth.hpp"

using namespace modal;

namespace {

struct ConstProvider final : FeatureProvider {
  std::vector<double> pf;
  explicit ConstProvider(std::size_t n) : pf(2 * n) {
    for (std::size_t i = 0; i < pf.size(); ++i) pf[i] = static_cast<double>(i);
  }
  std::size_t point_dims() const override { return 2; }
  std::size_t bev_dims() const override { return 1; }
  std::span<const double> point_features(std::size_t i) const override {
    return {pf.data() + 2 * i, 2};
  }
  std::vector<double> bev_features(double x, double y) const override { return {x + 10.0 * y}; }
};

Detection det(double x, double y, double conf, ClassId cls = synth_class::car,
              Vec3 ext = Vec3(2, 1, 1)) {
  Detection d;
  d.center = Vec3(x, y, 0);
  d.confidence = conf;
  d.class_id = cls;
  d.extent = ext;
  return d;
}

Point pt(double x, double y, double z = 0) {
  Point p;
  p.x = x;
  p.y = y;
  p.z = z;
  return p;
}

}  // namespace

TEST(Roi, MarginIsFractionWithFloor) {
  const RoiMargin m;
  EXPECT_TRUE(m.half_size(Vec3(3, 0.5, 0)).isApprox(Vec3(3.3, 0.6, 0.1)));
  EXPECT_EQ(RoiMargin::none().half_size(Vec3(1, 2, 3)), Vec3(1, 2, 3));
}

TEST(Roi, StrictInequality) {
  const auto d = det(0, 0, 1, synth_class::car, Vec3(1, 1, 1));
  const std::vector<Point> pts = {pt(0.99, 0), pt(1.0, 0), pt(1.09, 0), pt(1.1, 0), pt(0, 0, -1.2)};
  EXPECT_EQ(roi_points(d, pts, RoiMargin::none()), (std::vector<std::uint32_t>{0}));
  EXPECT_EQ(roi_points(d, pts), (std::vector<std::uint32_t>{0, 1, 2}));
}

TEST(Pairs, LayoutAndEncoding) {
  const auto tax = synthetic_taxonomy();
  ConstProvider prov(3);
  const auto d = det(1, 2, 0.9);
  const auto pair = assemble_pair_features(pt(1.5, 2.5, 0.25), 1, synth_class::car, d, prov, tax);
  const PairLayout layout{2, 1, tax.num_classes()};
  ASSERT_EQ(pair.size(), layout.width());
  EXPECT_EQ(pair[3], 2.0);
  EXPECT_EQ(pair[4], 3.0);
  EXPECT_EQ(pair[5], 1.5 + 25.0);

  const auto geo = encode_pair(pair, layout, FeatureSet::geometry);
  ASSERT_EQ(geo.size(), encoded_width(layout, FeatureSet::geometry));
  EXPECT_EQ(geo[0], 0.5);
  EXPECT_EQ(geo[1], 0.5);
  EXPECT_EQ(geo[2], 0.25);
  const auto full = encode_pair(pair, layout, FeatureSet::full);
  EXPECT_EQ(full.size(), encoded_width(layout, FeatureSet::full));
  EXPECT_EQ(encoded_width(layout, FeatureSet::geometry_bev), geo.size() + 2);
  EXPECT_EQ(full.size(), geo.size() + 4);
  EXPECT_EQ(full.back(), 3.0);
  EXPECT_THROW(encode_pair(std::span(pair).first(pair.size() - 1), layout, FeatureSet::full),
               Error);
}

TEST(FeatureSetNames, RoundTrip) {
  for (auto f : {FeatureSet::geometry, FeatureSet::geometry_bev, FeatureSet::full}) {
    EXPECT_EQ(parse_feature_set(to_string(f)), f);
  }
  EXPECT_THROW(parse_feature_set("nope"), Error);
}

TEST(NnBaseline, NearestSameClassInsideRoi) {
  const std::vector<Detection> dets = {det(0, 0, 0.9), det(3, 0, 0.8),
                                       det(1.5, 0, 0.7, synth_class::pedestrian)};
  const std::vector<Point> pts = {pt(0.5, 0), pt(2.0, 0), pt(1.5, 0), pt(20, 0), pt(1.4, 0)};
  const std::vector<ClassId> sem = {synth_class::car, synth_class::car, synth_class::car,
                                    synth_class::car, synth_class::pedestrian};
  const auto a = nn_baseline(pts, sem, dets);
  // Point 2 is equidistant: higher confidence wins.
  EXPECT_EQ(a, (std::vector<int>{0, 1, 0, -1, 2}));
  NnMembership nn(pts, sem, dets);
  const std::vector<std::uint32_t> cand = {0, 1, 2};
  EXPECT_EQ(nn.score(1, cand), (std::vector<double>{0, 1, 0}));
}

TEST(PairBuilder, LabelsFollowGtInstance) {
  const auto tax = synthetic_taxonomy();
  const std::vector<Point> pts = {pt(0.2, 0), pt(-0.3, 0.1), pt(1.2, 0), pt(1.5, 0.2)};
  const std::vector<ClassId> sem(4, synth_class::car);
  const std::vector<InstanceId> inst = {1, 1, 2, 2};
  ConstProvider prov(4);
  MembershipScene scene{pts, sem, inst, &prov, {}};
  scene.centers = {{det(0, 0, 1, synth_class::car, Vec3(2, 1, 1)), 1}};
  MembershipTrainConfig cfg;
  cfg.max_points_per_roi = 100;
  const auto ds = build_membership_dataset(std::span(&scene, 1), tax, cfg);
  ASSERT_EQ(ds.labels.size(), 4);
  EXPECT_EQ(ds.features.cols(),
            static_cast<Eigen::Index>(encoded_width({2, 1, tax.num_classes()}, cfg.features)));
  EXPECT_EQ(ds.labels.sum(), 2.0);
}

TEST(PairBuilder, BalancedCapsPositives) {
  const auto tax = synthetic_taxonomy();
  std::vector<Point> pts;
  std::vector<InstanceId> inst;
  for (int i = 0; i < 20; ++i) {
    pts.push_back(pt(-1.5 + 0.1 * i, 0));
    inst.push_back(i < 17 ? 1 : 2);
  }
  const std::vector<ClassId> sem(pts.size(), synth_class::car);
  ConstProvider prov(pts.size());
  MembershipScene scene{pts, sem, inst, &prov, {}};
  scene.centers = {{det(0, 0, 1, synth_class::car, Vec3(2, 1, 1)), 1}};
  MembershipTrainConfig cfg;
  cfg.max_points_per_roi = 100;
  cfg.balanced = true;
  const auto ds = build_membership_dataset(std::span(&scene, 1), tax, cfg);
  EXPECT_EQ(ds.labels.size(), 6);
  EXPECT_EQ(ds.labels.sum(), 3.0);
}

TEST(Stage2, LearnsSideOfSplit) {
  const auto tax = synthetic_taxonomy();
  std::vector<Point> pts;
  std::vector<InstanceId> inst;
  for (int i = 0; i < 60; ++i) {
    const double x = -1.8 + 0.06 * i;
    pts.push_back(pt(x, 0.1 * (i % 5)));
    inst.push_back(x < 0.3 ? 1 : 2);
  }
  const std::vector<ClassId> sem(pts.size(), synth_class::car);
  ConstProvider prov(pts.size());
  MembershipScene scene{pts, sem, inst, &prov, {}};
  scene.centers = {{det(-0.8, 0, 1, synth_class::car, Vec3(1.2, 1, 1)), 1},
                   {det(1.3, 0, 1, synth_class::car, Vec3(1.2, 1, 1)), 2}};
  MembershipTrainConfig cfg;
  cfg.features = FeatureSet::geometry;
  cfg.hidden = 16;
  cfg.depth = 3;
  cfg.optimizer = OptimizerKind::adam;
  cfg.learning_rate = 1e-2;
  cfg.epochs = 60;
  cfg.max_points_per_roi = 200;
  cfg.roi_margin = RoiMargin{};
  const auto trained = train_membership_stage2(std::span(&scene, 1), tax, cfg);
  EXPECT_EQ(trained.features, FeatureSet::geometry);
  const std::vector<Detection> dets = {scene.centers[0].first, scene.centers[1].first};
  MlpMembership mlp(trained.model, FeatureSet::geometry, pts, sem, dets, prov, tax);
  const std::vector<std::uint32_t> cand = {0, 59};
  const auto s0 = mlp.score(0, cand);
  EXPECT_GT(s0[0], 0.5);
  EXPECT_LT(s0[1], 0.5);
  EXPECT_THROW(MlpMembership(trained.model, FeatureSet::full, pts, sem, dets, prov, tax), Error);
}
