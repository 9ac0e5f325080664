#include "modal/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

namespace modal {

void PredictedMaps::validate(const GridSpec& spec, const Taxonomy& taxonomy) const {
  const std::size_t plane =
      static_cast<std::size_t>(spec.bev_width()) * static_cast<std::size_t>(spec.bev_depth());
  if (bev.width != spec.bev_width() || bev.depth != spec.bev_depth() ||
      bev.channels != static_cast<int>(taxonomy.num_things()) ||
      bev.heatmap.size() != plane * static_cast<std::size_t>(bev.channels) ||
      bev.height.size() != plane || bev.velocity.size() != 2 * plane) {
    throw Error(Errc::shape_mismatch, "predicted maps do not match the grid");
  }
  if (!extent.empty() && extent.size() != 3 * plane) {
    throw Error(Errc::shape_mismatch, "extent map does not match the grid");
  }
  for (double v : bev.heatmap) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(Errc::invariant_violation, "heatmap outside [0,1]");
  }
}

std::vector<Detection> nms_detect(const PredictedMaps& maps, const GridSpec& spec,
                                  const Taxonomy& taxonomy, const NmsConfig& config,
                                  const ExtentLookup& extent) {
  maps.validate(spec, taxonomy);
  const auto& b = maps.bev;
  struct Peak {
    double value;
    int k, bx, by;
  };
  std::vector<Peak> peaks;
  for (int k = 0; k < b.channels; ++k) {
    for (int bx = 0; bx < b.width; ++bx) {
      for (int by = 0; by < b.depth; ++by) {
        const double v = b.heat(k, bx, by);
        if (!(v > config.threshold)) continue;
        bool is_max = true;
        for (int dx = -1; dx <= 1 && is_max; ++dx) {
          for (int dy = -1; dy <= 1; ++dy) {
            const int nx = bx + dx;
            const int ny = by + dy;
            if (nx < 0 || ny < 0 || nx >= b.width || ny >= b.depth) continue;
            if (b.heat(k, nx, ny) > v) {
              is_max = false;
              break;
            }
          }
        }
        if (is_max) peaks.push_back({v, k, bx, by});
      }
    }
  }
  std::stable_sort(peaks.begin(), peaks.end(),
                   [](const Peak& a, const Peak& c) { return a.value > c.value; });
  if (config.max_dets >= 0 && peaks.size() > static_cast<std::size_t>(config.max_dets)) {
    peaks.resize(static_cast<std::size_t>(config.max_dets));
  }
  std::vector<Detection> out;
  out.reserve(peaks.size());
  for (const auto& p : peaks) {
    Detection d;
    const Vec2 c = spec.bev_cell_center(p.bx, p.by);
    const auto cell = b.cell(p.bx, p.by);
    d.center = Vec3(c.x(), c.y(), b.height[cell]);
    d.confidence = p.value;
    d.class_id = taxonomy.thing_ids()[static_cast<std::size_t>(p.k)];
    if (extent) {
      d.extent = extent(d.class_id, p.bx, p.by);
    } else if (!maps.extent.empty()) {
      d.extent = Vec3(maps.extent[3 * cell], maps.extent[3 * cell + 1], maps.extent[3 * cell + 2]);
    }
    d.velocity = Vec2(b.velocity[2 * cell], b.velocity[2 * cell + 1]);
    out.push_back(d);
  }
  return out;
}

FusionResult fuse_panoptic(std::span<const Point> points, std::span<const ClassId> sem_pred,
                           std::span<const Detection> detections,
                           const MembershipFunction& membership, const Taxonomy& taxonomy,
                           const FusionConfig& config) {
  if (sem_pred.size() != points.size()) {
    throw Error(Errc::count_mismatch, "semantic predictions do not match points");
  }
  for (std::size_t d = 0; d < detections.size(); ++d) {
    if (!taxonomy.is_thing(detections[d].class_id)) {
      throw Error(Errc::invalid_argument, "detection class is not a thing class in the taxonomy");
    }
    if (d > 0 && detections[d].confidence > detections[d - 1].confidence) {
      throw Error(Errc::invalid_argument, "detections are not sorted by decreasing confidence");
    }
  }
  FusionResult out;
  out.assigned.assign(points.size(), -1);
  std::vector<double> best(points.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t d = 0; d < detections.size(); ++d) {
    const auto& det = detections[d];
    std::vector<std::uint32_t> cand;
    for (auto pi : roi_points(det, points, config.margin)) {
      if (sem_pred[pi] != det.class_id) continue;
      if (!config.argmax && out.assigned[pi] >= 0) continue;
      cand.push_back(pi);
    }
    if (cand.empty()) continue;
    const auto scores = membership.score(d, cand);
    if (scores.size() != cand.size()) {
      throw Error(Errc::count_mismatch, "membership returned the wrong number of scores");
    }
    for (std::size_t i = 0; i < cand.size(); ++i) {
      const auto pi = cand[i];
      if (!(scores[i] > 0.5)) continue;
      if (config.argmax && out.assigned[pi] >= 0 && !(scores[i] > best[pi])) continue;
      out.assigned[pi] = static_cast<int>(d);
      best[pi] = scores[i];
    }
  }
  auto& lab = out.labeling;
  lab.sem.resize(points.size());
  lab.inst.assign(points.size(), kNoInstance);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const int d = out.assigned[i];
    if (d >= 0) {
      lab.sem[i] = detections[static_cast<std::size_t>(d)].class_id;
      lab.inst[i] = static_cast<InstanceId>(d + 1);
    } else {
      lab.sem[i] = sem_pred[i];
    }
  }
  return out;
}

double TrackerConfig::gate_for(ClassId cls) const {
  auto it = gate.find(cls);
  return it == gate.end() ? default_gate : it->second;
}

std::map<ClassId, double> TrackerConfig::gates_from_cwm(const CwmStats& stats) {
  std::map<ClassId, double> out;
  for (const auto& [cls, r] : stats) out[cls] = 2.0 * r.head<2>().norm();
  return out;
}

Tracker::Tracker(TrackerConfig config) : config_(std::move(config)) {
  if (config_.max_age < 0) throw Error(Errc::invalid_argument, "max_age must be >= 0");
}

std::vector<std::uint32_t> Tracker::step(std::size_t sweep, std::span<const Detection> detections,
                                         double dt) {
  if (!(dt > 0.0)) throw Error(Errc::invalid_argument, "dt must be positive");
  struct Cand {
    double dist;
    std::size_t t, d;
  };
  std::vector<Cand> cands;
  for (std::size_t t = 0; t < tracks_.size(); ++t) {
    const auto& tr = tracks_[t];
    const double elapsed = (tr.age + 1) * dt;
    for (std::size_t d = 0; d < detections.size(); ++d) {
      const auto& det = detections[d];
      if (det.class_id != tr.class_id) continue;
      const Vec2 back = det.center.head<2>() - det.velocity * elapsed;
      const double dist = (tr.last_center.head<2>() - back).norm();
      if (dist < config_.gate_for(det.class_id)) cands.push_back({dist, t, d});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    return std::tie(a.dist, a.t, a.d) < std::tie(b.dist, b.t, b.d);
  });
  std::vector<std::uint32_t> ids(detections.size(), 0);
  std::vector<bool> track_used(tracks_.size(), false);
  for (const auto& c : cands) {
    if (track_used[c.t] || ids[c.d] != 0) continue;
    track_used[c.t] = true;
    auto& tr = tracks_[c.t];
    ids[c.d] = tr.track_id;
    tr.history.push_back({sweep, c.d});
    tr.last_center = detections[c.d].center;
    tr.last_velocity = detections[c.d].velocity;
    tr.age = 0;
  }
  for (std::size_t t = 0; t < track_used.size(); ++t) {
    if (!track_used[t]) ++tracks_[t].age;
  }
  std::erase_if(tracks_, [&](const Tracklet& tr) { return tr.age > config_.max_age; });
  for (std::size_t d = 0; d < detections.size(); ++d) {
    if (ids[d] != 0) continue;
    if (next_id_ > 0xFFFF) throw Error(Errc::id_overflow, "track ids exceed 16 bits");
    Tracklet tr;
    tr.track_id = next_id_++;
    tr.class_id = detections[d].class_id;
    tr.history.push_back({sweep, d});
    tr.last_center = detections[d].center;
    tr.last_velocity = detections[d].velocity;
    ids[d] = tr.track_id;
    tracks_.push_back(std::move(tr));
  }
  return ids;
}

TrackedSweep track_sweep(Tracker& tracker, std::size_t sweep, const SweepInput& in,
                         double period, const GridSpec& spec, const Taxonomy& taxonomy,
                         const MembershipFactory& membership, const PipelineConfig& config,
                         const ExtentLookup& extent) {
  if (in.maps == nullptr) throw Error(Errc::invalid_argument, "sweep without predicted maps");
  TrackedSweep out;
  out.detections = nms_detect(*in.maps, spec, taxonomy, config.nms, extent);
  const auto mem = membership(in, out.detections);
  auto fused =
      fuse_panoptic(in.points, in.maps->point_sem, out.detections, *mem, taxonomy, config.fusion);
  const auto ids = tracker.step(sweep, out.detections, period);
  for (std::size_t i = 0; i < fused.assigned.size(); ++i) {
    const int d = fused.assigned[i];
    if (d >= 0) fused.labeling.inst[i] = ids[static_cast<std::size_t>(d)];
  }
  out.labeling = std::move(fused.labeling);
  out.assigned = std::move(fused.assigned);
  return out;
}

TrackingOutput panoptic_track_sequence(std::span<const SweepInput> sweeps, double period,
                                       const GridSpec& spec, const Taxonomy& taxonomy,
                                       const MembershipFactory& membership,
                                       const PipelineConfig& config) {
  Tracker tracker(config.tracker);
  TrackingOutput out;
  for (std::size_t s = 0; s < sweeps.size(); ++s) {
    auto t = track_sweep(tracker, s, sweeps[s], period, spec, taxonomy, membership, config);
    out.labelings.push_back(std::move(t.labeling));
    out.assigned.push_back(std::move(t.assigned));
    out.detections.push_back(std::move(t.detections));
  }
  return out;
}

}  // namespace modal
