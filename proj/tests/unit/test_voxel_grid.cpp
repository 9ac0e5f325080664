#include <gtest/gtest.h>

#include <random>

#include "modal/voxel_grid.hpp"
#include "oracles.hpp"

using namespace modal;

namespace {

GridSpec small_grid() {
  GridSpec g;
  g.voxel_size = Vec3(0.5, 0.5, 0.5);
  g.range = 4.0;
  g.z_min = -1.0;
  g.z_max = 1.0;
  g.bev_downsample = 2;
  return g;
}

}  // namespace

TEST(GridSpec, Dimensions) {
  const auto g = small_grid();
  EXPECT_NO_THROW(g.validate());
  EXPECT_EQ(g.width(), 16);
  EXPECT_EQ(g.height(), 4);
  EXPECT_EQ(g.bev_width(), 8);
  EXPECT_DOUBLE_EQ(g.bev_cell_x(), 1.0);
  GridSpec bad = g;
  bad.bev_downsample = 3;
  EXPECT_THROW(bad.validate(), Error);
  bad = g;
  bad.voxel_size.x() = 0.3;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(GridSpec, BevCellLookup) {
  const auto g = small_grid();
  int bx, by;
  ASSERT_TRUE(g.bev_cell_of(-4.0, 3.99, bx, by));
  EXPECT_EQ(bx, 0);
  EXPECT_EQ(by, 7);
  EXPECT_FALSE(g.bev_cell_of(4.0, 0.0, bx, by));
  EXPECT_TRUE(g.bev_cell_center(0, 0).isApprox(Vec2(-3.5, -3.5)));
}

TEST(Voxelize, DropsOutOfRangeAndSortsCells) {
  const auto g = small_grid();
  std::vector<Point> pts = {{0.1, 0.1, 0.1, 0, 0},  {0.2, 0.2, 0.2, 0, -0.5},
                            {-2.0, 2.0, -0.9, 0, 0}, {5.0, 0.0, 0.0, 0, 0},
                            {0.0, 0.0, 1.5, 0, 0}};
  const auto grid = voxelize(pts, g);
  EXPECT_EQ(grid.dropped(), 2u);
  EXPECT_EQ(grid.input_size(), 5u);
  ASSERT_EQ(grid.cells().size(), 2u);
  EXPECT_TRUE(grid.cells()[0].index < grid.cells()[1].index);
  const auto* c = grid.find({8, 8, 2});
  ASSERT_NE(c, nullptr);
  EXPECT_EQ(c->point_indices.size(), 2u);
  EXPECT_TRUE(c->has_current_sweep);
  EXPECT_FALSE(grid.is_current(1));
}

TEST(Voxelize, MajorityVote) {
  const auto g = small_grid();
  std::vector<Point> pts = {{0.1, 0.1, 0.1, 0, 0}, {0.2, 0.1, 0.1, 0, 0}, {0.3, 0.1, 0.1, 0, 0},
                            {0.4, 0.1, 0.1, 0, -1}, {0.4, 0.4, 0.4, 0, -1}};
  std::vector<ClassId> sem = {3, 2, 2, 3, 3};
  // Cell with 2x class 2 and 1x class 3 among current points; history votes don't count.
  const auto grid = voxelize(pts, g);
  const auto votes = majority_vote_labels(grid, sem);
  ASSERT_EQ(votes.size(), 1u);
  EXPECT_EQ(votes[0], 2);
  // Ties go to the lower id.
  std::vector<ClassId> tie = {5, 4, 0, 0, 0};
  const auto g2 = voxelize(std::span<const Point>(pts.data(), 2), g);
  EXPECT_EQ(majority_vote_labels(g2, tie)[0], 4);
}

TEST(Voxelize, HistoryOnlyCellIsIgnore) {
  const auto g = small_grid();
  std::vector<Point> pts = {{1.1, 1.1, 0.1, 0, -0.5}};
  const auto grid = voxelize(pts, g);
  EXPECT_EQ(majority_vote_labels(grid, std::vector<ClassId>{2})[0], kIgnoreClass);
}

TEST(Bev, FlattenReducers) {
  const auto g = small_grid();
  std::vector<Point> pts = {{0.1, 0.1, -0.9, 0, 0}, {0.1, 0.1, 0.6, 0, 0}};
  auto grid = voxelize(pts, g);
  attach_point_features(grid, std::vector<double>{1.0, 3.0}, 1);
  int bx, by;
  g.bev_cell_of(0.1, 0.1, bx, by);
  EXPECT_DOUBLE_EQ(flatten_bev(grid, BevReducer::mean).at(bx, by)[0], 2.0);
  EXPECT_DOUBLE_EQ(flatten_bev(grid, BevReducer::max).at(bx, by)[0], 3.0);
  EXPECT_DOUBLE_EQ(flatten_bev(grid, BevReducer::sum).at(bx, by)[0], 4.0);
}

TEST(Bev, InterpolationMatchesHandWrittenBilinear) {
  BevMap m;
  m.width = 4;
  m.depth = 3;
  m.channels = 1;
  m.cell_x = 1.0;
  m.cell_y = 1.0;
  m.origin_x = 0.0;
  m.origin_y = 0.0;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 12; ++i) m.data.push_back(u(rng));
  for (int trial = 0; trial < 200; ++trial) {
    const double x = 0.5 + 3.0 * u(rng), y = 0.5 + 2.0 * u(rng);
    const int bx = std::min(2, static_cast<int>(x - 0.5));
    const int by = std::min(1, static_cast<int>(y - 0.5));
    const double want = oracle::bilinear(m.at(bx, by)[0], m.at(bx + 1, by)[0], m.at(bx, by + 1)[0],
                                         m.at(bx + 1, by + 1)[0], x - 0.5 - bx, y - 0.5 - by);
    EXPECT_NEAR(interpolate_bev(m, x, y)[0], want, 1e-12);
  }
  // Outer half cell clamps to the border.
  EXPECT_DOUBLE_EQ(interpolate_bev(m, 0.1, 0.2)[0], m.at(0, 0)[0]);
  EXPECT_DOUBLE_EQ(interpolate_bev(m, 3.9, 2.9)[0], m.at(3, 2)[0]);
}
