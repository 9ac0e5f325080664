#include "modal/membership.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>

namespace modal {

Vec3 RoiMargin::half_size(const Vec3& extent) const {
  Vec3 h;
  for (int a = 0; a < 3; ++a) h[a] = extent[a] + std::max(fraction * extent[a], floor);
  return h;
}

bool in_roi(const Detection& det, const Point& p, const RoiMargin& margin) {
  const Vec3 h = margin.half_size(det.extent);
  return std::abs(p.x - det.center.x()) < h.x() && std::abs(p.y - det.center.y()) < h.y() &&
         std::abs(p.z - det.center.z()) < h.z();
}

std::vector<std::uint32_t> roi_points(const Detection& det, std::span<const Point> points,
                                      const RoiMargin& margin) {
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (in_roi(det, points[i], margin)) out.push_back(static_cast<std::uint32_t>(i));
  }
  return out;
}

namespace {

void append_onehot(std::vector<double>& v, const Taxonomy& taxonomy, ClassId cls) {
  const std::size_t k = taxonomy.num_classes();
  const int idx = taxonomy.class_index(cls);
  if (idx < 0) throw Error(Errc::invalid_argument, "class " + std::to_string(cls) + " unknown");
  const std::size_t at = v.size();
  v.resize(at + k, 0.0);
  v[at + static_cast<std::size_t>(idx)] = 1.0;
}

}  // namespace

std::vector<double> assemble_pair_features(const Point& p, std::size_t point_index,
                                           ClassId sem_pred, const Detection& det,
                                           const FeatureProvider& provider,
                                           const Taxonomy& taxonomy) {
  std::vector<double> v;
  v.reserve(6 + provider.point_dims() + 2 * provider.bev_dims() + 2 * taxonomy.num_classes());
  v.insert(v.end(), {p.x, p.y, p.z});
  const auto fp = provider.point_features(point_index);
  if (fp.size() != provider.point_dims()) {
    throw Error(Errc::dimension_mismatch, "point feature width differs from provider dims");
  }
  v.insert(v.end(), fp.begin(), fp.end());
  const auto fb = provider.bev_features(p.x, p.y);
  if (fb.size() != provider.bev_dims()) {
    throw Error(Errc::dimension_mismatch, "bev feature width differs from provider dims");
  }
  v.insert(v.end(), fb.begin(), fb.end());
  append_onehot(v, taxonomy, sem_pred);

  v.insert(v.end(), {det.center.x(), det.center.y(), det.center.z()});
  const auto fc = provider.bev_features(det.center.x(), det.center.y());
  if (fc.size() != provider.bev_dims()) {
    throw Error(Errc::dimension_mismatch, "bev feature width differs from provider dims");
  }
  v.insert(v.end(), fc.begin(), fc.end());
  append_onehot(v, taxonomy, det.class_id);
  return v;
}

const char* to_string(FeatureSet f) {
  switch (f) {
    case FeatureSet::geometry: return "geometry";
    case FeatureSet::geometry_bev: return "geometry_bev";
    case FeatureSet::full: return "full";
  }
  return "?";
}

FeatureSet parse_feature_set(const std::string& name) {
  if (name == "geometry") return FeatureSet::geometry;
  if (name == "geometry_bev") return FeatureSet::geometry_bev;
  if (name == "full") return FeatureSet::full;
  throw Error(Errc::invalid_argument, "unknown feature set '" + name + "'");
}

std::size_t encoded_width(const PairLayout& layout, FeatureSet set) {
  std::size_t w = 3 + layout.num_classes;
  if (set != FeatureSet::geometry) w += 2 * layout.bev_dims;
  if (set == FeatureSet::full) w += layout.point_dims;
  return w;
}

std::vector<double> encode_pair(std::span<const double> pair, const PairLayout& layout,
                                FeatureSet set) {
  if (pair.size() != layout.width()) {
    throw Error(Errc::dimension_mismatch, "pair vector does not match its layout");
  }
  const std::size_t P = layout.point_dims;
  const std::size_t B = layout.bev_dims;
  const std::size_t K = layout.num_classes;
  const double* point = pair.data();
  const double* center = pair.data() + layout.point_block();
  std::vector<double> out;
  out.reserve(encoded_width(layout, set));
  for (int a = 0; a < 3; ++a) out.push_back(point[a] - center[a]);
  out.insert(out.end(), center + 3 + B, center + 3 + B + K);
  if (set != FeatureSet::geometry) {
    out.insert(out.end(), point + 3 + P, point + 3 + P + B);
    out.insert(out.end(), center + 3, center + 3 + B);
  }
  if (set == FeatureSet::full) out.insert(out.end(), point + 3, point + 3 + P);
  return out;
}

std::vector<double> predict_membership(const Mlp& model, const Eigen::MatrixXd& pairs) {
  if (model.out_dim() != 1) throw Error(Errc::invalid_argument, "membership model needs 1 output");
  if (pairs.rows() == 0) return {};
  const Eigen::MatrixXd out = model.predict(pairs);
  return {out.data(), out.data() + out.rows()};
}

std::vector<int> nn_baseline(std::span<const Point> points, std::span<const ClassId> sem_pred,
                             std::span<const Detection> detections, const RoiMargin& margin) {
  if (sem_pred.size() != points.size()) {
    throw Error(Errc::count_mismatch, "semantic predictions do not match points");
  }
  std::vector<int> out(points.size(), -1);
  std::vector<double> best(points.size(), 0.0);
  for (std::size_t d = 0; d < detections.size(); ++d) {
    const auto& det = detections[d];
    for (auto pi : roi_points(det, points, margin)) {
      if (sem_pred[pi] != det.class_id) continue;
      const double dist = (points[pi].xyz() - det.center).norm();
      const int cur = out[pi];
      bool take = cur < 0 || dist < best[pi];
      if (!take && dist == best[pi]) {
        // detections are visited in index order, so an equal-confidence tie
        // keeps the lower index
        take = det.confidence > detections[static_cast<std::size_t>(cur)].confidence;
      }
      if (take) {
        out[pi] = static_cast<int>(d);
        best[pi] = dist;
      }
    }
  }
  return out;
}

NnMembership::NnMembership(std::span<const Point> points, std::span<const ClassId> sem_pred,
                           std::span<const Detection> detections, const RoiMargin& margin)
    : assignment_(nn_baseline(points, sem_pred, detections, margin)) {}

std::vector<double> NnMembership::score(std::size_t det_index,
                                        std::span<const std::uint32_t> candidates) const {
  std::vector<double> out;
  out.reserve(candidates.size());
  for (auto pi : candidates) {
    out.push_back(assignment_.at(pi) == static_cast<int>(det_index) ? 1.0 : 0.0);
  }
  return out;
}

MlpMembership::MlpMembership(const Mlp& model, FeatureSet set, std::span<const Point> points,
                             std::span<const ClassId> sem_pred,
                             std::span<const Detection> detections,
                             const FeatureProvider& provider, const Taxonomy& taxonomy)
    : model_(model),
      set_(set),
      points_(points),
      sem_(sem_pred),
      dets_(detections),
      provider_(provider),
      taxonomy_(taxonomy) {
  const PairLayout layout{provider.point_dims(), provider.bev_dims(), taxonomy.num_classes()};
  if (static_cast<std::size_t>(model.in_dim()) != encoded_width(layout, set)) {
    throw Error(Errc::dimension_mismatch, "membership model width does not match features");
  }
}

std::vector<double> MlpMembership::score(std::size_t det_index,
                                         std::span<const std::uint32_t> candidates) const {
  if (candidates.empty()) return {};
  const PairLayout layout{provider_.point_dims(), provider_.bev_dims(), taxonomy_.num_classes()};
  const auto& det = dets_[det_index];
  Eigen::MatrixXd x(static_cast<Eigen::Index>(candidates.size()),
                    static_cast<Eigen::Index>(encoded_width(layout, set_)));
  for (std::size_t r = 0; r < candidates.size(); ++r) {
    const auto pi = candidates[r];
    const auto pair = assemble_pair_features(points_[pi], pi, sem_[pi], det, provider_, taxonomy_);
    const auto enc = encode_pair(pair, layout, set_);
    for (std::size_t c = 0; c < enc.size(); ++c) {
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = enc[c];
    }
  }
  return predict_membership(model_, x);
}

MembershipPairBuilder::MembershipPairBuilder(const Taxonomy& taxonomy,
                                             MembershipTrainConfig config)
    : taxonomy_(taxonomy), config_(config), rng_(config.seed ^ 0x6d656d62ULL) {}

void MembershipPairBuilder::add(const MembershipScene& scene) {
  if (scene.provider == nullptr) throw Error(Errc::invalid_argument, "scene without features");
  if (scene.sem_pred.size() != scene.points.size() ||
      scene.gt_inst.size() != scene.points.size()) {
    throw Error(Errc::count_mismatch, "scene label arrays do not match points");
  }
  const PairLayout layout{scene.provider->point_dims(), scene.provider->bev_dims(),
                          taxonomy_.num_classes()};
  const std::size_t width = encoded_width(layout, config_.features);
  if (width_ != 0 && width != width_) {
    throw Error(Errc::dimension_mismatch, "scenes disagree on feature widths");
  }
  width_ = width;
  const std::size_t cap = static_cast<std::size_t>(std::max(1, config_.max_points_per_roi));
  for (const auto& [det, inst] : scene.centers) {
    std::vector<std::uint32_t> pos, neg;
    for (auto pi : roi_points(det, scene.points, config_.roi_margin)) {
      if (scene.sem_pred[pi] != det.class_id) continue;
      (scene.gt_inst[pi] == inst ? pos : neg).push_back(pi);
    }
    std::size_t take_neg = std::min(neg.size(), cap / 2);
    const std::size_t take_pos =
        std::min(pos.size(), config_.balanced && take_neg > 0 ? take_neg : cap - take_neg);
    take_neg = std::min(neg.size(), cap - take_pos);
    std::shuffle(pos.begin(), pos.end(), rng_);
    std::shuffle(neg.begin(), neg.end(), rng_);
    auto emit = [&](std::uint32_t pi, double label) {
      const auto pair = assemble_pair_features(scene.points[pi], pi, scene.sem_pred[pi], det,
                                               *scene.provider, taxonomy_);
      const auto enc = encode_pair(pair, layout, config_.features);
      rows_.insert(rows_.end(), enc.begin(), enc.end());
      labels_.push_back(label);
    };
    for (std::size_t i = 0; i < take_pos; ++i) emit(pos[i], 1.0);
    for (std::size_t i = 0; i < take_neg; ++i) emit(neg[i], 0.0);
  }
}

MembershipDataset MembershipPairBuilder::build() const {
  MembershipDataset ds;
  const auto n = static_cast<Eigen::Index>(labels_.size());
  const auto w = static_cast<Eigen::Index>(width_);
  ds.features = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                               Eigen::RowMajor>>(rows_.data(), n, w);
  ds.labels = Eigen::Map<const Eigen::VectorXd>(labels_.data(), n);
  return ds;
}

MembershipDataset build_membership_dataset(std::span<const MembershipScene> scenes,
                                           const Taxonomy& taxonomy,
                                           const MembershipTrainConfig& config) {
  MembershipPairBuilder builder(taxonomy, config);
  for (const auto& scene : scenes) builder.add(scene);
  return builder.build();
}

TrainedMembership train_membership_stage2(const MembershipDataset& dataset,
                                          const MembershipTrainConfig& config) {
  if (dataset.features.rows() == 0) throw Error(Errc::empty_input, "no membership training pairs");
  TrainedMembership out;
  out.features = config.features;
  out.model = Mlp::point_seg(static_cast<int>(dataset.features.cols()), config.hidden,
                             config.depth, config.seed);
  OptimizerState opt = config.optimizer == OptimizerKind::adam
                           ? OptimizerState::adam(config.learning_rate)
                           : OptimizerState::sgd(config.learning_rate);
  out.result = train_epochs(out.model, dataset.features, dataset.labels, opt,
                            TrainConfig{config.epochs, config.batch_size, config.seed});
  return out;
}

TrainedMembership train_membership_stage2(std::span<const MembershipScene> scenes,
                                          const Taxonomy& taxonomy,
                                          const MembershipTrainConfig& config) {
  return train_membership_stage2(build_membership_dataset(scenes, taxonomy, config), config);
}

}  // namespace modal
