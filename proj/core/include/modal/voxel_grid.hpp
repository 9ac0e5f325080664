#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <vector>

#include "modal/core_types.hpp"

namespace modal {

/// Sensor-centred voxel grid geometry. Origin is (-range, -range, z_min).
struct GridSpec {
  Vec3 voxel_size{0.075, 0.075, 0.2};
  double range = 54.0;
  double z_min = -5.0;
  double z_max = 3.0;
  int bev_downsample = 8;

  /// Throws InvalidArgument unless every derived dimension is a positive
  /// integer and the BEV downsample divides the planar size exactly.
  void validate() const;

  int width() const;   // cells along x
  int depth() const;   // cells along y
  int height() const;  // cells along z
  int bev_width() const { return width() / bev_downsample; }
  int bev_depth() const { return depth() / bev_downsample; }
  double bev_cell_x() const { return voxel_size.x() * bev_downsample; }
  double bev_cell_y() const { return voxel_size.y() * bev_downsample; }

  /// BEV cell containing (x, y), or false when outside the planar grid.
  bool bev_cell_of(double x, double y, int& bx, int& by) const;
  Vec2 bev_cell_center(int bx, int by) const;

  bool operator==(const GridSpec&) const = default;
};

struct VoxelIndex {
  int ix = 0;
  int iy = 0;
  int iz = 0;
  auto operator<=>(const VoxelIndex&) const = default;
};

struct VoxelCell {
  VoxelIndex index;
  std::vector<std::uint32_t> point_indices;
  bool has_current_sweep = false;
  std::vector<double> feature;
};

/// Occupied cells sorted by index; lookups are binary searches.
class SparseVoxelGrid {
 public:
  SparseVoxelGrid() = default;
  SparseVoxelGrid(GridSpec spec, std::vector<VoxelCell> cells, std::size_t dropped,
                  std::vector<bool> current_flags);

  const GridSpec& spec() const { return spec_; }
  const std::vector<VoxelCell>& cells() const { return cells_; }
  std::vector<VoxelCell>& mutable_cells() { return cells_; }
  std::size_t dropped() const { return dropped_; }
  /// Number of points handed to voxelize (kept + dropped).
  std::size_t input_size() const { return current_.size(); }
  bool is_current(std::uint32_t point_index) const { return current_.at(point_index); }
  const VoxelCell* find(const VoxelIndex& index) const;

 private:
  GridSpec spec_;
  std::vector<VoxelCell> cells_;
  std::size_t dropped_ = 0;
  std::vector<bool> current_;
};

/// Dense height-flattened feature map. Row-major over (bx, by, channel).
struct BevMap {
  int width = 0;
  int depth = 0;
  int channels = 0;
  double cell_x = 0.0;
  double cell_y = 0.0;
  double origin_x = 0.0;
  double origin_y = 0.0;
  std::vector<double> data;

  std::span<double> at(int bx, int by) {
    return {data.data() + (static_cast<std::size_t>(bx) * depth + by) * channels,
            static_cast<std::size_t>(channels)};
  }
  std::span<const double> at(int bx, int by) const {
    return {data.data() + (static_cast<std::size_t>(bx) * depth + by) * channels,
            static_cast<std::size_t>(channels)};
  }
  Vec2 cell_center(int bx, int by) const {
    return {origin_x + (bx + 0.5) * cell_x, origin_y + (by + 0.5) * cell_y};
  }
};

enum class BevReducer { mean, max, sum };

/// Points beyond the planar range or outside the height band are dropped.
SparseVoxelGrid voxelize(std::span<const Point> points, const GridSpec& spec);

/// Majority class of the current-sweep (dt == 0) points of each cell, aligned
/// with grid.cells(). Ties go to the lowest class id; history-only cells get
/// the ignore class.
std::vector<ClassId> majority_vote_labels(const SparseVoxelGrid& grid,
                                          std::span<const ClassId> sem_labels);

/// Per-cell mean of per-point features (row-major, `dims` values per point).
void attach_point_features(SparseVoxelGrid& grid, std::span<const double> point_features,
                           std::size_t dims);

BevMap flatten_bev(const SparseVoxelGrid& grid, BevReducer reducer);

/// Bilinear interpolation between the four surrounding cell centres; the
/// outer half-cell clamps to the border cell.
std::vector<double> interpolate_bev(const BevMap& bev, double x, double y);

/// Source of per-point encoder features and the BEV feature map sampled at
/// arbitrary planar positions.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual std::size_t point_dims() const = 0;
  virtual std::size_t bev_dims() const = 0;
  virtual std::span<const double> point_features(std::size_t point_index) const = 0;
  virtual std::vector<double> bev_features(double x, double y) const = 0;
};

}  // namespace modal
