#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "modal/core_types.hpp"
#include "modal/voxel_grid.hpp"

namespace modal {

/// Statistics of the visible points of one instance in one sweep.
struct ModalInstance {
  InstanceId instance_id = kNoInstance;
  ClassId class_id = kIgnoreClass;
  Vec3 center = Vec3::Zero();
  /// Per-axis half-extent around `center`.
  Vec3 extent = Vec3::Zero();
  int point_count = 0;
  double timestamp = 0.0;
  std::size_t sweep_index = 0;
};

struct InstanceTrajectory {
  InstanceId instance_id = kNoInstance;
  ClassId class_id = kIgnoreClass;
  std::vector<ModalInstance> records;  // ordered by sweep
  /// Componentwise max of the per-sweep extents.
  Vec3 aggregated_extent = Vec3::Zero();
};

/// Arithmetic mean. Throws EmptyInput on an empty set.
Vec3 modal_center(std::span<const Vec3> points);

/// Shrink-wrapped extent: componentwise max |p - c|.
Vec3 extent_sw(std::span<const Vec3> points, const Vec3& center);

/// One ModalInstance per thing instance among the current-sweep points.
std::vector<ModalInstance> modal_instances(const PointCloudSweep& sweep, const Taxonomy& taxonomy,
                                           std::size_t sweep_index = 0);

/// Groups modal instances by id across the sequence, sorted by instance id.
std::vector<InstanceTrajectory> extract_trajectories(const SweepSequence& sequence,
                                                     const Taxonomy& taxonomy);

using CwmStats = std::map<ClassId, Vec3>;

enum class ExtentVariant { sw, max, cwm, dsb };

const char* to_string(ExtentVariant v);
ExtentVariant parse_extent_variant(const std::string& name);

struct ExtentStrategy {
  ExtentVariant variant = ExtentVariant::max;
  std::optional<int> dsb_min_points;
  std::optional<CwmStats> cwm_stats;
  /// CWM replaces a per-sweep extent whose largest component is below this
  /// fraction of the class mean's largest component.
  double cwm_small_fraction = 0.25;

  static ExtentStrategy sw() { return {ExtentVariant::sw, {}, {}, 0.25}; }
  static ExtentStrategy max() { return {ExtentVariant::max, {}, {}, 0.25}; }
  static ExtentStrategy cwm(CwmStats stats) {
    return {ExtentVariant::cwm, {}, std::move(stats), 0.25};
  }
  static ExtentStrategy dsb(int min_points) { return {ExtentVariant::dsb, min_points, {}, 0.25}; }

  /// Variant-specific parameters must be present exactly when required.
  void validate() const;
};

struct TrainingExtent {
  Vec3 extent = Vec3::Zero();
  /// DSB: the sweep is excluded from detection training.
  bool excluded = false;
  /// CWM: the sweep's extent was replaced by the class mean.
  bool replaced = false;
};

/// Per-record training extents of a trajectory under `strategy`.
std::vector<TrainingExtent> aggregate_extent(const InstanceTrajectory& trajectory,
                                             const ExtentStrategy& strategy);

/// Per-class mean of per-trajectory MAX extents. Classes without instances
/// are absent from the result.
CwmStats class_wise_mean_extents(std::span<const InstanceTrajectory> trajectories,
                                 const Taxonomy& taxonomy);
CwmStats class_wise_mean_extents(std::span<const SweepSequence> sequences,
                                 const Taxonomy& taxonomy);

/// Sidecar format: `class_id<TAB>rx<TAB>ry<TAB>rz` per line.
void write_cwm(std::ostream& out, const CwmStats& stats);
CwmStats read_cwm(std::istream& in);

struct HeatmapConfig {
  /// Lower bound on the Gaussian sigma, in BEV cells.
  double sigma_min_cells = 2.0;
  /// Support radius in sigmas.
  double truncate_sigmas = 3.0;
};

struct BevInstance {
  Vec3 center = Vec3::Zero();
  Vec3 extent = Vec3::Zero();
  ClassId class_id = kIgnoreClass;
  Vec2 velocity = Vec2::Zero();
  /// Peak value; 1 for training targets, the confidence when simulating.
  double amplitude = 1.0;
};

struct BevTargets {
  int channels = 0;
  int width = 0;
  int depth = 0;
  std::vector<double> heatmap;   // [channel][bx][by]
  std::vector<double> height;    // [bx][by]
  std::vector<double> velocity;  // [bx][by][2]
  std::vector<std::uint8_t> valid_mask;

  std::size_t cell(int bx, int by) const { return static_cast<std::size_t>(bx) * depth + by; }
  double heat(int k, int bx, int by) const {
    return heatmap[static_cast<std::size_t>(k) * width * depth + cell(bx, by)];
  }
};

/// Gaussian sigma in metres for an instance extent.
double heatmap_sigma(const Vec3& extent, const GridSpec& spec, const HeatmapConfig& config = {});

/// Renders class-wise centre heatmaps (per-cell max over instances), plus
/// height and velocity targets at each instance's centre cell.
BevTargets render_bev_targets(std::span<const BevInstance> instances, const GridSpec& spec,
                              const Taxonomy& taxonomy, const HeatmapConfig& config = {});

/// Centred difference of modal centres; one-sided at trajectory ends and zero
/// for an instance seen in a single sweep.
Vec2 velocity_target(const InstanceTrajectory& trajectory, std::size_t record_index, double dt);

/// 1 for roi points that belong to the instance, else 0.
std::vector<std::uint8_t> membership_target(std::span<const std::uint32_t> instance_points,
                                            std::span<const std::uint32_t> roi_points);

}  // namespace modal
