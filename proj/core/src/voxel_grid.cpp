#include "modal/voxel_grid.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace modal {

namespace {

int exact_cells(double extent, double size, const char* what) {
  const double n = extent / size;
  const double r = std::round(n);
  if (r < 1.0 || std::abs(n - r) > 1e-6 * std::max(1.0, r)) {
    throw Error(Errc::invalid_argument,
                std::string("grid ") + what + " is not a whole number of voxels");
  }
  return static_cast<int>(r);
}

}  // namespace

void GridSpec::validate() const {
  if (!(voxel_size.minCoeff() > 0.0) || !(range > 0.0) || !(z_max > z_min)) {
    throw Error(Errc::invalid_argument, "grid sizes must be positive");
  }
  if (bev_downsample < 1) throw Error(Errc::invalid_argument, "bev_downsample must be >= 1");
  const int w = width();
  const int d = depth();
  (void)height();
  if (w % bev_downsample != 0 || d % bev_downsample != 0) {
    throw Error(Errc::invalid_argument, "bev_downsample must divide the planar grid size");
  }
}

int GridSpec::width() const { return exact_cells(2.0 * range, voxel_size.x(), "width"); }
int GridSpec::depth() const { return exact_cells(2.0 * range, voxel_size.y(), "depth"); }
int GridSpec::height() const { return exact_cells(z_max - z_min, voxel_size.z(), "height"); }

bool GridSpec::bev_cell_of(double x, double y, int& bx, int& by) const {
  const double fx = std::floor((x + range) / bev_cell_x());
  const double fy = std::floor((y + range) / bev_cell_y());
  if (!(fx >= 0.0 && fy >= 0.0 && fx < bev_width() && fy < bev_depth())) return false;
  bx = static_cast<int>(fx);
  by = static_cast<int>(fy);
  return true;
}

Vec2 GridSpec::bev_cell_center(int bx, int by) const {
  return {-range + (bx + 0.5) * bev_cell_x(), -range + (by + 0.5) * bev_cell_y()};
}

SparseVoxelGrid::SparseVoxelGrid(GridSpec spec, std::vector<VoxelCell> cells, std::size_t dropped,
                                 std::vector<bool> current_flags)
    : spec_(std::move(spec)),
      cells_(std::move(cells)),
      dropped_(dropped),
      current_(std::move(current_flags)) {}

const VoxelCell* SparseVoxelGrid::find(const VoxelIndex& index) const {
  auto it = std::lower_bound(cells_.begin(), cells_.end(), index,
                             [](const VoxelCell& c, const VoxelIndex& v) { return c.index < v; });
  if (it == cells_.end() || it->index != index) return nullptr;
  return &*it;
}

SparseVoxelGrid voxelize(std::span<const Point> points, const GridSpec& spec) {
  spec.validate();
  const int w = spec.width();
  const int d = spec.depth();
  const int h = spec.height();
  std::vector<std::pair<VoxelIndex, std::uint32_t>> keyed;
  keyed.reserve(points.size());
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (!(std::hypot(p.x, p.y) <= spec.range)) {
      ++dropped;
      continue;
    }
    const double fx = std::floor((p.x + spec.range) / spec.voxel_size.x());
    const double fy = std::floor((p.y + spec.range) / spec.voxel_size.y());
    const double fz = std::floor((p.z - spec.z_min) / spec.voxel_size.z());
    if (!(fx >= 0 && fx < w && fy >= 0 && fy < d && fz >= 0 && fz < h)) {
      ++dropped;
      continue;
    }
    keyed.push_back({VoxelIndex{static_cast<int>(fx), static_cast<int>(fy), static_cast<int>(fz)},
                     static_cast<std::uint32_t>(i)});
  }
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : a.second < b.second;
  });
  std::vector<bool> current(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) current[i] = points[i].dt == 0.0;
  std::vector<VoxelCell> cells;
  for (const auto& [index, pi] : keyed) {
    if (cells.empty() || cells.back().index != index) {
      cells.push_back(VoxelCell{index, {}, false, {}});
    }
    cells.back().point_indices.push_back(pi);
    if (points[pi].dt == 0.0) cells.back().has_current_sweep = true;
  }
  return SparseVoxelGrid(spec, std::move(cells), dropped, std::move(current));
}

std::vector<ClassId> majority_vote_labels(const SparseVoxelGrid& grid,
                                          std::span<const ClassId> sem_labels) {
  if (sem_labels.size() < grid.input_size()) {
    throw Error(Errc::count_mismatch, "labels do not cover every voxelized point");
  }
  std::vector<ClassId> out;
  out.reserve(grid.cells().size());
  std::map<ClassId, int> votes;
  for (const auto& cell : grid.cells()) {
    votes.clear();
    for (auto pi : cell.point_indices) {
      if (grid.is_current(pi)) ++votes[sem_labels[pi]];
    }
    if (votes.empty()) {
      out.push_back(kIgnoreClass);
      continue;
    }
    // std::map iterates ids ascending, so strict > keeps the lowest id on ties.
    ClassId best = votes.begin()->first;
    int best_count = votes.begin()->second;
    for (const auto& [id, count] : votes) {
      if (count > best_count) {
        best = id;
        best_count = count;
      }
    }
    out.push_back(best);
  }
  return out;
}

void attach_point_features(SparseVoxelGrid& grid, std::span<const double> point_features,
                           std::size_t dims) {
  if (dims == 0 || point_features.size() != grid.input_size() * dims) {
    throw Error(Errc::dimension_mismatch, "point feature block does not match point count");
  }
  for (auto& cell : grid.mutable_cells()) {
    cell.feature.assign(dims, 0.0);
    for (auto pi : cell.point_indices) {
      for (std::size_t c = 0; c < dims; ++c) cell.feature[c] += point_features[pi * dims + c];
    }
    const double inv = 1.0 / static_cast<double>(cell.point_indices.size());
    for (auto& v : cell.feature) v *= inv;
  }
}

BevMap flatten_bev(const SparseVoxelGrid& grid, BevReducer reducer) {
  const auto& spec = grid.spec();
  BevMap bev;
  bev.width = spec.bev_width();
  bev.depth = spec.bev_depth();
  bev.cell_x = spec.bev_cell_x();
  bev.cell_y = spec.bev_cell_y();
  bev.origin_x = -spec.range;
  bev.origin_y = -spec.range;
  const auto& cells = grid.cells();
  std::size_t dims = cells.empty() ? 0 : cells.front().feature.size();
  for (const auto& cell : cells) {
    if (cell.feature.size() != dims || dims == 0) {
      throw Error(Errc::dimension_mismatch, "voxel feature dimensions differ or are missing");
    }
  }
  bev.channels = static_cast<int>(dims);
  const std::size_t n_cells = static_cast<std::size_t>(bev.width) * bev.depth;
  bev.data.assign(n_cells * dims, 0.0);
  std::vector<int> counts(n_cells, 0);
  const int ds = spec.bev_downsample;
  // cells are sorted by (ix, iy, iz), so accumulation order is fixed.
  for (const auto& cell : cells) {
    const int bx = cell.index.ix / ds;
    const int by = cell.index.iy / ds;
    const std::size_t flat = static_cast<std::size_t>(bx) * bev.depth + by;
    auto out = bev.at(bx, by);
    const bool first = counts[flat] == 0;
    for (std::size_t c = 0; c < dims; ++c) {
      const double v = cell.feature[c];
      switch (reducer) {
        case BevReducer::max:
          out[c] = first ? v : std::max(out[c], v);
          break;
        case BevReducer::mean:
        case BevReducer::sum:
          out[c] += v;
          break;
      }
    }
    ++counts[flat];
  }
  if (reducer == BevReducer::mean) {
    for (std::size_t flat = 0; flat < n_cells; ++flat) {
      if (counts[flat] > 1) {
        const double inv = 1.0 / counts[flat];
        for (std::size_t c = 0; c < dims; ++c) bev.data[flat * dims + c] *= inv;
      }
    }
  }
  return bev;
}

std::vector<double> interpolate_bev(const BevMap& bev, double x, double y) {
  const double extent_x = bev.width * bev.cell_x;
  const double extent_y = bev.depth * bev.cell_y;
  const double lx = x - bev.origin_x;
  const double ly = y - bev.origin_y;
  if (!(lx >= 0.0 && lx < extent_x && ly >= 0.0 && ly < extent_y)) {
    throw Error(Errc::out_of_range, "interpolation query outside the BEV map");
  }
  auto axis = [](double local, double cell, int n, int& i0, int& i1, double& frac) {
    double u = local / cell - 0.5;
    u = std::clamp(u, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<int>(std::floor(u));
    i1 = std::min(i0 + 1, n - 1);
    frac = u - i0;
  };
  int x0, x1, y0, y1;
  double fx, fy;
  axis(lx, bev.cell_x, bev.width, x0, x1, fx);
  axis(ly, bev.cell_y, bev.depth, y0, y1, fy);
  std::vector<double> out(static_cast<std::size_t>(bev.channels), 0.0);
  const auto f00 = bev.at(x0, y0);
  const auto f10 = bev.at(x1, y0);
  const auto f01 = bev.at(x0, y1);
  const auto f11 = bev.at(x1, y1);
  for (int c = 0; c < bev.channels; ++c) {
    out[c] = (1 - fx) * (1 - fy) * f00[c] + fx * (1 - fy) * f10[c] + (1 - fx) * fy * f01[c] +
             fx * fy * f11[c];
  }
  return out;
}

}  // namespace modal
