#include <gtest/gtest.h>

#include <sstream>

#include "modal/core_types.hpp"
#include "modal/synth.hpp"

using namespace modal;

namespace {

Taxonomy small_taxonomy() {
  return Taxonomy({{0, "unlabeled", ClassKind::ignore},
                   {1, "car", ClassKind::thing},
                   {2, "road", ClassKind::stuff}},
                  15);
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::numeric_error;
}

}  // namespace

TEST(Taxonomy, ClassifiesIds) {
  const auto t = small_taxonomy();
  EXPECT_TRUE(t.is_thing(1));
  EXPECT_TRUE(t.is_stuff(2));
  EXPECT_TRUE(t.is_ignore(0));
  EXPECT_TRUE(t.is_ignore(99));
  EXPECT_EQ(t.thing_index(1), 0);
  EXPECT_EQ(t.thing_index(2), -1);
  EXPECT_EQ(t.class_index(2), 1);
  EXPECT_EQ(t.num_classes(), 2u);
}

TEST(Taxonomy, RejectsBadDefinitions) {
  EXPECT_EQ(code_of([] {
              Taxonomy({{1, "a", ClassKind::thing}, {1, "b", ClassKind::stuff}}, 1);
            }),
            Errc::duplicate_class_id);
  EXPECT_EQ(code_of([] { Taxonomy({{1, "a", ClassKind::thing}}, 1); }), Errc::invalid_taxonomy);
  EXPECT_EQ(code_of([] {
              Taxonomy({{1, "a", ClassKind::thing}, {2, "b", ClassKind::stuff}}, 0);
            }),
            Errc::invalid_taxonomy);
  EXPECT_EQ(code_of([] {
              Taxonomy({{0, "a", ClassKind::thing}, {2, "b", ClassKind::stuff}}, 1);
            }),
            Errc::invalid_taxonomy);
}

TEST(Taxonomy, FileRoundTrip) {
  const auto t = synthetic_taxonomy();
  std::stringstream ss;
  write_taxonomy(ss, t);
  const auto back = parse_taxonomy(ss);
  ASSERT_EQ(back.classes().size(), t.classes().size());
  EXPECT_EQ(back.min_instance_points(), 15);
  for (std::size_t i = 0; i < t.classes().size(); ++i) {
    EXPECT_EQ(back.classes()[i].id, t.classes()[i].id);
    EXPECT_EQ(back.classes()[i].name, t.classes()[i].name);
    EXPECT_EQ(back.classes()[i].kind, t.classes()[i].kind);
  }
}

TEST(Taxonomy, ParseRequiresHeader) {
  std::istringstream in("1\tcar\tthing\n2\troad\tstuff\n");
  EXPECT_EQ(code_of([&] { parse_taxonomy(in); }), Errc::parse_error);
}

TEST(Pose, RigidityAndInverse) {
  Pose p = Pose::Identity();
  p.block<3, 3>(0, 0) = Eigen::AngleAxisd(0.7, Vec3::UnitZ()).toRotationMatrix();
  p.block<3, 1>(0, 3) = Vec3(1, 2, 3);
  EXPECT_TRUE(is_rigid(p));
  EXPECT_TRUE((inverse_rigid(p) * p).isApprox(Pose::Identity(), 1e-12));
  Pose s = p;
  s(0, 0) *= 2.0;
  EXPECT_FALSE(is_rigid(s));
  EXPECT_EQ(code_of([&] { inverse_rigid(s); }), Errc::non_rigid_pose);
}

TEST(Sweep, ValidateCatchesLabelErrors) {
  const auto t = small_taxonomy();
  PointCloudSweep s;
  s.points = {{0, 0, 0, 0, 0}, {1, 0, 0, 0, 0}};
  s.sem_labels = {1, 2};
  s.inst_labels = {3, 0};
  EXPECT_NO_THROW(s.validate(t));
  s.inst_labels = {3, 4};
  EXPECT_EQ(code_of([&] { s.validate(t); }), Errc::invariant_violation);
  s.inst_labels = {3};
  EXPECT_EQ(code_of([&] { s.validate(t); }), Errc::count_mismatch);
}

TEST(Sequence, InstanceKeepsOneClass) {
  const auto t = synthetic_taxonomy();
  SweepSequence seq;
  for (int i = 0; i < 2; ++i) {
    PointCloudSweep s;
    s.timestamp = 0.1 * i;
    s.points = {{0, 0, 0, 0, 0}};
    s.sem_labels = {static_cast<ClassId>(i == 0 ? 1 : 2)};
    s.inst_labels = {7};
    seq.sweeps.push_back(s);
  }
  EXPECT_EQ(code_of([&] { seq.validate(t); }), Errc::invariant_violation);
  seq.sweeps[1].sem_labels = {1};
  EXPECT_NO_THROW(seq.validate(t));
  seq.sweeps[1].timestamp = 0.0;
  EXPECT_EQ(code_of([&] { seq.validate(t); }), Errc::invariant_violation);
}

TEST(Frames, TransformAndAccumulate) {
  SweepSequence seq;
  for (int i = 0; i < 3; ++i) {
    PointCloudSweep s;
    s.timestamp = 0.5 * i;
    s.ego_pose = Pose::Identity();
    s.ego_pose(0, 3) = 2.0 * i;  // ego moves along +x
    s.points = {{1.0, 0.0, 0.0, 0.0, 0.0}};
    s.sem_labels = {2};
    s.inst_labels = {0};
    seq.sweeps.push_back(s);
  }
  const auto acc = accumulate_history(seq, 2, 5);
  ASSERT_EQ(acc.size(), 3u);
  // Current sweep first, then history oldest first, behind the ego.
  EXPECT_DOUBLE_EQ(acc.points[0].x, 1.0);
  EXPECT_DOUBLE_EQ(acc.points[0].dt, 0.0);
  EXPECT_NEAR(acc.points[1].x, -3.0, 1e-12);
  EXPECT_NEAR(acc.points[1].dt, -1.0, 1e-12);
  EXPECT_NEAR(acc.points[2].x, -1.0, 1e-12);
  EXPECT_NEAR(acc.points[2].dt, -0.5, 1e-12);
  EXPECT_EQ(accumulate_history(seq, 2, 1).size(), 2u);
}
