#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "modal/core_types.hpp"
#include "modal/membership.hpp"

namespace modal {

struct ClassPq {
  ClassId class_id = kIgnoreClass;
  bool thing = false;
  double iou_sum = 0.0;
  long tp = 0;
  long fp = 0;
  long fn = 0;
  double pq = 0.0;
  double sq = 0.0;
  double rq = 0.0;
  /// Semantic IoU over points.
  double iou = 0.0;
  long sem_inter = 0;
  long sem_union = 0;
};

struct PqReport {
  std::vector<ClassPq> classes;
  double pq = 0.0;
  double pq_dagger = 0.0;
  double sq = 0.0;
  double rq = 0.0;
  double pq_things = 0.0;
  double pq_stuff = 0.0;
  double miou = 0.0;
};

/// Sums matches over sweeps. Points whose GT is ignore, or belongs to an
/// instance with fewer than min_instance_points points, are dropped from
/// both sides.
class PqAccumulator {
 public:
  explicit PqAccumulator(const Taxonomy& taxonomy);
  void add(const PanopticLabeling& gt, const PanopticLabeling& pred);
  /// Adds another accumulator's sums; both must share the taxonomy.
  void merge(const PqAccumulator& other);
  PqReport report() const;

 private:
  const Taxonomy& taxonomy_;
  std::vector<ClassPq> classes_;
};

PqReport compute_pq(const PanopticLabeling& gt, const PanopticLabeling& pred,
                    const Taxonomy& taxonomy);

struct MiouReport {
  std::vector<std::pair<ClassId, double>> per_class;
  double mean = 0.0;
};

MiouReport compute_miou(std::span<const ClassId> gt, std::span<const ClassId> pred,
                        const Taxonomy& taxonomy);

struct LstqReport {
  double s_assoc = 0.0;
  double s_cls = 0.0;
  double lstq = 0.0;
};

/// Tubes are pooled per sequence; S_assoc averages over GT tubes of every
/// added sequence, S_cls is mIoU over all pooled points.
class LstqAccumulator {
 public:
  explicit LstqAccumulator(const Taxonomy& taxonomy);
  void add_sequence(std::span<const PanopticLabeling> gt, std::span<const PanopticLabeling> pred);
  void merge(const LstqAccumulator& other);
  LstqReport report() const;

 private:
  const Taxonomy& taxonomy_;
  double assoc_sum_ = 0.0;
  long tubes_ = 0;
  std::vector<long> inter_;
  std::vector<long> uni_;
};

LstqReport compute_lstq(std::span<const PanopticLabeling> gt,
                        std::span<const PanopticLabeling> pred, const Taxonomy& taxonomy);

struct MembershipCount {
  long correct = 0;
  long total = 0;
  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
};

/// Greedy one-to-one match of GT instances to detections of the same class by
/// increasing center distance, below `gate`. Returns detection index per
/// entry of `gt_ids`, or -1.
std::vector<int> match_instances_to_detections(std::span<const InstanceId> gt_ids,
                                               std::span<const ClassId> gt_classes,
                                               std::span<const Vec3> gt_centers,
                                               std::span<const Detection> detections,
                                               double gate);

/// Over GT thing points inside at least one RoI: fraction whose assigned
/// detection is the one matched to their GT instance.
MembershipCount membership_accuracy(std::span<const Point> points,
                                    const PanopticLabeling& gt, std::span<const int> assigned,
                                    std::span<const Detection> detections,
                                    const Taxonomy& taxonomy, const RoiMargin& margin = {},
                                    double gate = 2.0);

/// CSV with columns class,pq,sq,rq,iou,tp,fp,fn plus aggregate rows.
void write_pq_csv(std::ostream& out, const PqReport& report, const Taxonomy& taxonomy);

}  // namespace modal
