#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "modal/core_types.hpp"
#include "modal/neuralnet.hpp"
#include "modal/voxel_grid.hpp"

namespace modal {

struct Detection {
  Vec3 center = Vec3::Zero();
  double confidence = 0.0;
  ClassId class_id = kIgnoreClass;
  Vec3 extent = Vec3::Zero();
  /// Velocity read from the velocity map at the detection cell.
  Vec2 velocity = Vec2::Zero();
};

/// Per-axis inflation margin = max(fraction * extent, floor).
struct RoiMargin {
  double fraction = 0.1;
  double floor = 0.1;

  static RoiMargin none() { return {0.0, 0.0}; }
  Vec3 half_size(const Vec3& extent) const;
};

/// Indices of points strictly inside the box center +- (extent + margin).
std::vector<std::uint32_t> roi_points(const Detection& det, std::span<const Point> points,
                                      const RoiMargin& margin = {});

bool in_roi(const Detection& det, const Point& p, const RoiMargin& margin = {});

/// Widths of the raw pair vector. K counts every taxonomy class.
struct PairLayout {
  std::size_t point_dims = 0;
  std::size_t bev_dims = 0;
  std::size_t num_classes = 0;

  std::size_t point_block() const { return 3 + point_dims + bev_dims + num_classes; }
  std::size_t center_block() const { return 3 + bev_dims + num_classes; }
  std::size_t width() const { return point_block() + center_block(); }
};

/// [p; F^point; F^bev(p); onehot(sem)] followed by [u; F^bev(u); onehot(k)].
std::vector<double> assemble_pair_features(const Point& p, std::size_t point_index,
                                           ClassId sem_pred, const Detection& det,
                                           const FeatureProvider& provider,
                                           const Taxonomy& taxonomy);

/// Which blocks the network sees.
enum class FeatureSet { geometry, geometry_bev, full };

const char* to_string(FeatureSet f);
FeatureSet parse_feature_set(const std::string& name);

/// Network input built from a raw pair vector. Point position is expressed
/// relative to the center; the class enters once since pairs are class-filtered.
std::vector<double> encode_pair(std::span<const double> pair, const PairLayout& layout,
                                FeatureSet set);
std::size_t encoded_width(const PairLayout& layout, FeatureSet set);

/// Eval-mode sigmoid outputs, one per row.
std::vector<double> predict_membership(const Mlp& model, const Eigen::MatrixXd& pairs);

/// Per point: index of the nearest same-class detection whose RoI contains the
/// point, or -1. Ties go to higher confidence, then lower index.
std::vector<int> nn_baseline(std::span<const Point> points, std::span<const ClassId> sem_pred,
                             std::span<const Detection> detections,
                             const RoiMargin& margin = {});

/// Scores candidate points against one detection.
class MembershipFunction {
 public:
  virtual ~MembershipFunction() = default;
  virtual std::vector<double> score(std::size_t det_index,
                                    std::span<const std::uint32_t> candidates) const = 0;
};

/// 1 where the nearest-neighbour rule picks `det_index`, else 0.
class NnMembership final : public MembershipFunction {
 public:
  NnMembership(std::span<const Point> points, std::span<const ClassId> sem_pred,
               std::span<const Detection> detections, const RoiMargin& margin = {});
  std::vector<double> score(std::size_t det_index,
                            std::span<const std::uint32_t> candidates) const override;
  const std::vector<int>& assignment() const { return assignment_; }

 private:
  std::vector<int> assignment_;
};

class MlpMembership final : public MembershipFunction {
 public:
  MlpMembership(const Mlp& model, FeatureSet set, std::span<const Point> points,
                std::span<const ClassId> sem_pred, std::span<const Detection> detections,
                const FeatureProvider& provider, const Taxonomy& taxonomy);
  std::vector<double> score(std::size_t det_index,
                            std::span<const std::uint32_t> candidates) const override;

 private:
  const Mlp& model_;
  FeatureSet set_;
  std::span<const Point> points_;
  std::span<const ClassId> sem_;
  std::span<const Detection> dets_;
  const FeatureProvider& provider_;
  const Taxonomy& taxonomy_;
};

/// One sweep's worth of stage-2 training input.
struct MembershipScene {
  std::span<const Point> points;
  std::span<const ClassId> sem_pred;
  std::span<const InstanceId> gt_inst;
  const FeatureProvider* provider = nullptr;
  /// Stand-in detections and the GT instance each one came from.
  std::vector<std::pair<Detection, InstanceId>> centers;
};

struct MembershipTrainConfig {
  FeatureSet features = FeatureSet::full;
  int hidden = 64;
  int depth = 4;
  OptimizerKind optimizer = OptimizerKind::sgd;
  double learning_rate = 5e-4;
  int epochs = 20;
  int batch_size = 32;
  std::uint64_t seed = 0;
  /// Pairs sampled per RoI; at most half of them negatives when both exist.
  int max_points_per_roi = 48;
  /// Candidate region for training pairs; the bare extent by default.
  RoiMargin roi_margin = RoiMargin::none();
  /// In RoIs that contain negatives, keep no more positives than negatives.
  bool balanced = false;
};

struct MembershipDataset {
  Eigen::MatrixXd features;
  Eigen::VectorXd labels;
};

/// Collects training pairs scene by scene so feature maps need not outlive
/// their sweep.
class MembershipPairBuilder {
 public:
  MembershipPairBuilder(const Taxonomy& taxonomy, MembershipTrainConfig config);
  void add(const MembershipScene& scene);
  std::size_t size() const { return labels_.size(); }
  MembershipDataset build() const;

 private:
  const Taxonomy& taxonomy_;
  MembershipTrainConfig config_;
  std::mt19937_64 rng_;
  std::size_t width_ = 0;
  std::vector<double> rows_;
  std::vector<double> labels_;
};

MembershipDataset build_membership_dataset(std::span<const MembershipScene> scenes,
                                           const Taxonomy& taxonomy,
                                           const MembershipTrainConfig& config);

struct TrainedMembership {
  Mlp model;
  FeatureSet features = FeatureSet::full;
  TrainResult result;
};

TrainedMembership train_membership_stage2(std::span<const MembershipScene> scenes,
                                          const Taxonomy& taxonomy,
                                          const MembershipTrainConfig& config);
TrainedMembership train_membership_stage2(const MembershipDataset& dataset,
                                          const MembershipTrainConfig& config);

}  // namespace modal
