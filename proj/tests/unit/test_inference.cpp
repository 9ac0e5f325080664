#include <gtest/gtest.h>

#include <random>

#include "modal/inference.hpp"
#include "modal/synth.hpp"
#include "oracles.hpp"

using namespace modal;

namespace {

GridSpec small_grid() {
  GridSpec g;
  g.voxel_size = Vec3(1, 1, 1);
  g.range = 4;
  g.z_min = -1;
  g.z_max = 1;
  g.bev_downsample = 1;
  return g;
}

PredictedMaps empty_maps(const GridSpec& g, const Taxonomy& tax) {
  PredictedMaps m;
  m.bev.channels = static_cast<int>(tax.num_things());
  m.bev.width = g.bev_width();
  m.bev.depth = g.bev_depth();
  const std::size_t plane = static_cast<std::size_t>(m.bev.width) * m.bev.depth;
  m.bev.heatmap.assign(plane * m.bev.channels, 0.0);
  m.bev.height.assign(plane, 0.0);
  m.bev.velocity.assign(2 * plane, 0.0);
  return m;
}

void set_heat(PredictedMaps& m, int k, int bx, int by, double v) {
  m.bev.heatmap[static_cast<std::size_t>(k) * m.bev.width * m.bev.depth + m.bev.cell(bx, by)] = v;
}

Detection det_at(double x, double y, ClassId cls, double conf = 1.0, Vec2 vel = Vec2::Zero()) {
  Detection d;
  d.center = Vec3(x, y, 0);
  d.class_id = cls;
  d.confidence = conf;
  d.extent = Vec3(1, 1, 1);
  d.velocity = vel;
  return d;
}

}  // namespace

TEST(Nms, LocalMaximaAboveThreshold) {
  const auto tax = synthetic_taxonomy();
  const auto g = small_grid();
  auto m = empty_maps(g, tax);
  set_heat(m, 0, 2, 2, 0.9);
  set_heat(m, 0, 3, 2, 0.8);  // suppressed by its neighbour
  set_heat(m, 0, 6, 6, 0.3);  // not strictly above threshold
  set_heat(m, 2, 5, 1, 0.95);
  m.bev.height[m.bev.cell(5, 1)] = 0.4;
  m.bev.velocity[2 * m.bev.cell(5, 1)] = 1.5;
  const auto dets = nms_detect(m, g, tax);
  ASSERT_EQ(dets.size(), 2u);
  EXPECT_EQ(dets[0].class_id, synth_class::pedestrian);
  EXPECT_EQ(dets[0].confidence, 0.95);
  EXPECT_TRUE(dets[0].center.isApprox(Vec3(1.5, -2.5, 0.4)));
  EXPECT_EQ(dets[0].velocity, Vec2(1.5, 0.0));
  EXPECT_EQ(dets[1].class_id, synth_class::car);
  EXPECT_TRUE(dets[1].center.isApprox(Vec3(-1.5, -1.5, 0)));

  const auto one = nms_detect(m, g, tax, {0.3, 1});
  ASSERT_EQ(one.size(), 1u);
  const auto looked = nms_detect(m, g, tax, {}, [](ClassId c, int bx, int by) {
    return Vec3(c, bx, by);
  });
  EXPECT_EQ(looked[1].extent, Vec3(synth_class::car, 2, 2));
}

TEST(Nms, PlateausKeepEveryEqualCell) {
  const auto tax = synthetic_taxonomy();
  const auto g = small_grid();
  auto m = empty_maps(g, tax);
  set_heat(m, 1, 4, 4, 0.7);
  set_heat(m, 1, 4, 5, 0.7);
  EXPECT_EQ(nms_detect(m, g, tax).size(), 2u);
}

TEST(Nms, RejectsBadMaps) {
  const auto tax = synthetic_taxonomy();
  const auto g = small_grid();
  auto m = empty_maps(g, tax);
  set_heat(m, 0, 1, 1, 1.5);
  EXPECT_THROW(nms_detect(m, g, tax), Error);
  m = empty_maps(g, tax);
  m.bev.height.pop_back();
  EXPECT_THROW(nms_detect(m, g, tax), Error);
}

TEST(Fusion, MatchesLineByLineOracle) {
  const auto tax = synthetic_taxonomy();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-3, 3);
  const ClassId things[] = {synth_class::car, synth_class::truck, synth_class::pedestrian};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Point> pts(300);
    std::vector<ClassId> sem(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      pts[i].x = u(rng);
      pts[i].y = u(rng);
      pts[i].z = 0.3 * u(rng);
      sem[i] = i % 7 == 0 ? synth_class::road : things[rng() % 3];
    }
    std::vector<Detection> dets;
    for (int d = 0; d < 5; ++d) dets.push_back(det_at(u(rng), u(rng), things[rng() % 3], 1.0 - 0.1 * d));
    std::vector<std::vector<double>> table(dets.size(), std::vector<double>(pts.size()));
    for (auto& row : table) {
      for (auto& v : row) v = (rng() % 5) * 0.25;
    }
    PanopticLabeling want;
    const auto owner = oracle::fuse_line_by_line(pts, sem, dets, table, 0.1, 0.1, want);
    const auto got = fuse_panoptic(pts, sem, dets, oracle::TableMembership(table), tax);
    EXPECT_EQ(got.assigned, owner);
    EXPECT_EQ(got.labeling.sem, want.sem);
    EXPECT_EQ(got.labeling.inst, want.inst);
  }
}

TEST(Fusion, ArgmaxPrefersHigherScore) {
  const auto tax = synthetic_taxonomy();
  const std::vector<Point> pts(1);
  const std::vector<ClassId> sem = {synth_class::car};
  const std::vector<Detection> dets = {det_at(0, 0, synth_class::car, 0.9),
                                       det_at(0.2, 0, synth_class::car, 0.8)};
  const oracle::TableMembership table({{0.6}, {0.9}});
  EXPECT_EQ(fuse_panoptic(pts, sem, dets, table, tax).assigned[0], 0);
  FusionConfig arg;
  arg.argmax = true;
  const auto r = fuse_panoptic(pts, sem, dets, table, tax, arg);
  EXPECT_EQ(r.assigned[0], 1);
  EXPECT_EQ(r.labeling.inst[0], 2u);
}

TEST(Fusion, ValidatesInput) {
  const auto tax = synthetic_taxonomy();
  const std::vector<Point> pts(1);
  const std::vector<ClassId> sem = {synth_class::car};
  const oracle::TableMembership table({{1.0}, {1.0}});
  const std::vector<Detection> unsorted = {det_at(0, 0, synth_class::car, 0.5),
                                           det_at(0, 0, synth_class::car, 0.6)};
  EXPECT_THROW(fuse_panoptic(pts, sem, unsorted, table, tax), Error);
  const std::vector<Detection> stuff = {det_at(0, 0, synth_class::road)};
  EXPECT_THROW(fuse_panoptic(pts, sem, stuff, table, tax), Error);
}

TEST(Tracker, FollowsConstantVelocity) {
  Tracker tr;
  const Vec2 v(2, 0);
  auto a = tr.step(0, std::vector{det_at(0, 0, synth_class::car, 1, v), det_at(0, 5, synth_class::car)}, 0.5);
  EXPECT_EQ(a, (std::vector<std::uint32_t>{1, 2}));
  // Second car swapped order; first moved one second's worth of v * dt.
  auto b = tr.step(1, std::vector{det_at(0, 5.1, synth_class::car), det_at(1, 0, synth_class::car, 1, v)}, 0.5);
  EXPECT_EQ(b, (std::vector<std::uint32_t>{2, 1}));
  // Class mismatch opens a new track.
  auto c = tr.step(2, std::vector{det_at(2, 0, synth_class::truck, 1, v)}, 0.5);
  EXPECT_EQ(c, (std::vector<std::uint32_t>{3}));
}

TEST(Tracker, AgesOutAndBridgesGaps) {
  TrackerConfig cfg;
  cfg.max_age = 1;
  Tracker tr(cfg);
  const Vec2 v(1, 0);
  tr.step(0, std::vector{det_at(0, 0, synth_class::car, 1, v)}, 1.0);
  tr.step(1, std::vector<Detection>{}, 1.0);
  // Skipped one sweep: the back-projection spans two periods.
  EXPECT_EQ(tr.step(2, std::vector{det_at(2, 0, synth_class::car, 1, v)}, 1.0),
            (std::vector<std::uint32_t>{1}));
  tr.step(3, std::vector<Detection>{}, 1.0);
  tr.step(4, std::vector<Detection>{}, 1.0);
  EXPECT_EQ(tr.step(5, std::vector{det_at(5, 0, synth_class::car, 1, v)}, 1.0),
            (std::vector<std::uint32_t>{2}));
  EXPECT_THROW(tr.step(6, std::vector<Detection>{}, 0.0), Error);
}

TEST(Tracker, GateIsPerClass) {
  TrackerConfig cfg;
  cfg.default_gate = 1.0;
  cfg.gate[synth_class::truck] = 5.0;
  EXPECT_EQ(cfg.gate_for(synth_class::truck), 5.0);
  EXPECT_EQ(cfg.gate_for(synth_class::car), 1.0);
  Tracker tr(cfg);
  tr.step(0, std::vector{det_at(0, 0, synth_class::car), det_at(0, 10, synth_class::truck)}, 1.0);
  const auto ids = tr.step(1, std::vector{det_at(2, 0, synth_class::car), det_at(3, 10, synth_class::truck)}, 1.0);
  EXPECT_EQ(ids, (std::vector<std::uint32_t>{3, 2}));
  CwmStats stats;
  stats[synth_class::car] = Vec3(3, 4, 1);
  EXPECT_EQ(TrackerConfig::gates_from_cwm(stats).at(synth_class::car), 10.0);
}
