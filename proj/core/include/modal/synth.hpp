#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "modal/core_types.hpp"
#include "modal/inference.hpp"
#include "modal/targets.hpp"
#include "modal/voxel_grid.hpp"

namespace modal {

/// Class ids of the synthetic taxonomy.
namespace synth_class {
inline constexpr ClassId car = 1;
inline constexpr ClassId truck = 2;
inline constexpr ClassId pedestrian = 3;
inline constexpr ClassId road = 4;
inline constexpr ClassId building = 5;
}  // namespace synth_class

/// ignore/car/truck/pedestrian/road/building, min 15 points per instance.
Taxonomy synthetic_taxonomy();

struct BoxPrior {
  ClassId class_id = synth_class::car;
  /// Full box dimensions (length along x, width, height).
  Vec3 mean_size{4.5, 1.8, 1.5};
  Vec3 std_size{0.3, 0.1, 0.1};
  double weight = 1.0;
  double speed_min = 0.0;
  double speed_max = 0.0;
};

std::vector<BoxPrior> default_box_priors();

struct SceneConfig {
  std::uint64_t seed = 0;
  int sweep_count = 10;
  double period = 0.5;
  std::vector<BoxPrior> priors = default_box_priors();
  int min_instances = 6;
  int max_instances = 10;
  /// Surface samples per square metre at `ref_range`; falls off as 1/range^2.
  double density_ref = 1000.0;
  double ref_range = 10.0;
  /// Per-sample jitter inside its stratum, as a fraction of the half cell.
  double jitter = 0.5;
  bool occlusion = true;
  double ground_z = -1.8;
  double ground_extent = 38.0;
  /// Uniform ground samples per square metre.
  double ground_density = 1.0;
  int building_walls = 0;
  /// Object centres stay within [min_range, max_range] of the sensor.
  double min_range = 5.0;
  double max_range = 34.0;
  /// Minimum clearance between boxes of different groups.
  double min_gap = 1.0;
  /// Adjacent same-class groups with small gaps.
  bool ambiguous = false;
  double group_gap_min = 0.2;
  double group_gap_max = 0.6;
  int group_size_max = 3;
  /// Size scale drawn per group member.
  double group_scale_min = 0.7;
  double group_scale_max = 1.3;
  /// Groups queue along the direction perpendicular to the line of sight.
  bool tangential_groups = false;
  int placement_attempts = 400;

  void validate() const;
};

/// Box faces; the bottom face is never sampled.
enum class Face : int { pos_x = 0, neg_x = 1, pos_y = 2, neg_y = 3, pos_z = 4 };

Vec3 face_normal(Face f);

struct Box {
  Vec3 center = Vec3::Zero();
  /// Half sizes along each axis.
  Vec3 half = Vec3::Zero();
};

/// The face whose outward normal best faces the sensor.
Face dominant_face(const Box& box, const Vec3& sensor);

struct SurfaceSampling {
  double density_ref = 1000.0;
  double ref_range = 10.0;
  double jitter = 0.5;
};

/// Stratified samples on one face; spacing grows linearly with range.
std::vector<Vec3> sample_face(const Box& box, Face face, const Vec3& sensor,
                              const SurfaceSampling& sampling, std::mt19937_64& rng);

/// Samples the dominant face when `occlusion` is set, else every face but the
/// bottom.
std::vector<std::pair<Vec3, Face>> sample_box_surface(const Box& box, const Vec3& sensor,
                                                      const SurfaceSampling& sampling,
                                                      bool occlusion, std::mt19937_64& rng);

struct GtObject {
  InstanceId id = kNoInstance;
  ClassId class_id = kIgnoreClass;
  Vec3 half_size = Vec3::Zero();
  /// Box centre at t = 0.
  Vec3 start = Vec3::Zero();
  Vec2 velocity = Vec2::Zero();
  /// Objects sharing a group were placed adjacent on purpose.
  int group = 0;

  Box box_at(double t) const;
};

struct SyntheticSequence {
  SweepSequence sequence;
  std::vector<GtObject> registry;
  /// visible_faces[sweep][object] lists the faces that received samples.
  std::vector<std::vector<std::vector<Face>>> visible_faces;
};

SyntheticSequence generate_sequence(const SceneConfig& config, const Taxonomy& taxonomy);

struct DetectorNoise {
  double center_jitter = 0.0;
  double confidence_noise = 0.0;
  double drop_probability = 0.0;
  double semantic_flip = 0.0;
  double velocity_noise = 0.0;
  /// Relative sigma applied to predicted extents.
  double extent_noise = 0.0;
  /// Sigma of the per-instance centroid estimate used by the offset feature.
  double centroid_noise = 0.0;

  void validate() const;
};

struct DetectorConfig {
  ExtentStrategy strategy = ExtentStrategy::max();
  DetectorNoise noise;
  HeatmapConfig heatmap;
  std::uint64_t seed = 0;
  double ground_z = -1.8;
  /// Feature maps are pooled over this many heatmap cells per side.
  int feature_downsample = 1;
};

/// Hand-crafted per-point features and their pooled BEV map.
class SynthFeatureProvider final : public FeatureProvider {
 public:
  static constexpr std::size_t kDims = 5;

  SynthFeatureProvider(std::vector<double> point_features, BevMap bev);
  std::size_t point_dims() const override { return kDims; }
  std::size_t bev_dims() const override { return kDims; }
  std::span<const double> point_features(std::size_t point_index) const override;
  std::vector<double> bev_features(double x, double y) const override;
  const BevMap& bev() const { return bev_; }

 private:
  std::vector<double> point_features_;
  BevMap bev_;
};

/// density, height above ground, range, and the planar offset to a noisy
/// estimate of the point's own instance centroid.
std::shared_ptr<const SynthFeatureProvider> make_synth_features(
    const PointCloudSweep& sweep, const Taxonomy& taxonomy, const GridSpec& spec,
    double ground_z, double centroid_noise, std::mt19937_64& rng);

/// Stand-in for the backbone: one PredictedMaps per sweep.
std::vector<PredictedMaps> simulate_detector(const SyntheticSequence& seq,
                                             const Taxonomy& taxonomy, const GridSpec& spec,
                                             const DetectorConfig& config);

/// Single sweep variant; `trajectories` supplies strategy extents.
PredictedMaps simulate_sweep(const SyntheticSequence& seq, std::size_t sweep,
                             const std::vector<InstanceTrajectory>& trajectories,
                             const Taxonomy& taxonomy, const GridSpec& spec,
                             const DetectorConfig& config);

}  // namespace modal
