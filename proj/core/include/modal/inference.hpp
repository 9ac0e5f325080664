#pragma once

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "modal/core_types.hpp"
#include "modal/membership.hpp"
#include "modal/targets.hpp"
#include "modal/voxel_grid.hpp"

namespace modal {

/// Backbone outputs for one sweep.
struct PredictedMaps {
  /// Class heatmaps, height and velocity on the BEV grid.
  BevTargets bev;
  /// Predicted extent per BEV cell, 3 values per cell.
  std::vector<double> extent;
  /// Per-point semantic prediction.
  std::vector<ClassId> point_sem;
  std::shared_ptr<const FeatureProvider> features;

  void validate(const GridSpec& spec, const Taxonomy& taxonomy) const;
};

struct NmsConfig {
  double threshold = 0.3;
  int max_dets = 500;
};

/// Extent for a detection of class `cls` at BEV cell (bx, by).
using ExtentLookup = std::function<Vec3(ClassId cls, int bx, int by)>;

/// 3x3 local maxima per class channel above threshold, best first.
std::vector<Detection> nms_detect(const PredictedMaps& maps, const GridSpec& spec,
                                  const Taxonomy& taxonomy, const NmsConfig& config = {},
                                  const ExtentLookup& extent = {});

struct FusionConfig {
  RoiMargin margin;
  /// Per point, pick the highest-scoring detection instead of the first one
  /// in confidence order that claims it.
  bool argmax = false;
};

struct FusionResult {
  PanopticLabeling labeling;
  /// Detection index per point, or -1.
  std::vector<int> assigned;
};

/// Detections must be sorted by decreasing confidence. Detection d issues
/// instance id d + 1.
FusionResult fuse_panoptic(std::span<const Point> points, std::span<const ClassId> sem_pred,
                           std::span<const Detection> detections,
                           const MembershipFunction& membership, const Taxonomy& taxonomy,
                           const FusionConfig& config = {});

struct Tracklet {
  std::uint32_t track_id = 0;
  ClassId class_id = kIgnoreClass;
  /// (sweep, detection index) per match.
  std::vector<std::pair<std::size_t, std::size_t>> history;
  Vec3 last_center = Vec3::Zero();
  Vec2 last_velocity = Vec2::Zero();
  /// Sweeps since the last match.
  int age = 0;
};

struct TrackerConfig {
  std::map<ClassId, double> gate;
  double default_gate = 2.0;
  int max_age = 2;

  double gate_for(ClassId cls) const;
  /// Gate of twice the planar norm of each class-mean extent.
  static std::map<ClassId, double> gates_from_cwm(const CwmStats& stats);
};

class Tracker {
 public:
  explicit Tracker(TrackerConfig config = {});

  /// Matches one sweep's detections; returns the track id per detection.
  std::vector<std::uint32_t> step(std::size_t sweep, std::span<const Detection> detections,
                                  double dt);

  const std::vector<Tracklet>& tracks() const { return tracks_; }

 private:
  TrackerConfig config_;
  std::vector<Tracklet> tracks_;
  std::uint32_t next_id_ = 1;
};

struct SweepInput {
  std::span<const Point> points;
  const PredictedMaps* maps = nullptr;
};

using MembershipFactory = std::function<std::unique_ptr<MembershipFunction>(
    const SweepInput& input, std::span<const Detection> detections)>;

struct TrackingOutput {
  std::vector<PanopticLabeling> labelings;
  std::vector<std::vector<Detection>> detections;
  std::vector<std::vector<int>> assigned;
};

struct PipelineConfig {
  NmsConfig nms;
  FusionConfig fusion;
  TrackerConfig tracker;
};

struct TrackedSweep {
  PanopticLabeling labeling;
  std::vector<Detection> detections;
  std::vector<int> assigned;
};

/// One sweep of the pipeline below, for callers that stream sweeps.
TrackedSweep track_sweep(Tracker& tracker, std::size_t sweep, const SweepInput& input,
                         double period, const GridSpec& spec, const Taxonomy& taxonomy,
                         const MembershipFactory& membership, const PipelineConfig& config = {},
                         const ExtentLookup& extent = {});

/// nms_detect -> fuse_panoptic -> Tracker per sweep; instance ids are track ids.
TrackingOutput panoptic_track_sequence(std::span<const SweepInput> sweeps, double period,
                                       const GridSpec& spec, const Taxonomy& taxonomy,
                                       const MembershipFactory& membership,
                                       const PipelineConfig& config = {});

}  // namespace modal
