#include "modal/targets.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <unordered_set>

namespace modal {

Vec3 modal_center(std::span<const Vec3> points) {
  if (points.empty()) throw Error(Errc::empty_input, "modal_center of an empty point set");
  Vec3 sum = Vec3::Zero();
  for (const auto& p : points) sum += p;
  return sum / static_cast<double>(points.size());
}

Vec3 extent_sw(std::span<const Vec3> points, const Vec3& center) {
  if (points.empty()) throw Error(Errc::empty_input, "extent_sw of an empty point set");
  Vec3 r = Vec3::Zero();
  for (const auto& p : points) r = r.cwiseMax((p - center).cwiseAbs());
  return r;
}

std::vector<ModalInstance> modal_instances(const PointCloudSweep& sweep, const Taxonomy& taxonomy,
                                           std::size_t sweep_index) {
  std::map<InstanceId, std::pair<ClassId, std::vector<Vec3>>> groups;
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    const auto id = sweep.inst_labels[i];
    if (id == kNoInstance || sweep.points[i].dt != 0.0) continue;
    if (!taxonomy.is_thing(sweep.sem_labels[i])) continue;
    auto& g = groups[id];
    g.first = sweep.sem_labels[i];
    g.second.push_back(sweep.points[i].xyz());
  }
  std::vector<ModalInstance> out;
  out.reserve(groups.size());
  for (const auto& [id, g] : groups) {
    ModalInstance m;
    m.instance_id = id;
    m.class_id = g.first;
    m.center = modal_center(g.second);
    m.extent = extent_sw(g.second, m.center);
    m.point_count = static_cast<int>(g.second.size());
    m.timestamp = sweep.timestamp;
    m.sweep_index = sweep_index;
    out.push_back(m);
  }
  return out;
}

std::vector<InstanceTrajectory> extract_trajectories(const SweepSequence& sequence,
                                                     const Taxonomy& taxonomy) {
  std::map<InstanceId, InstanceTrajectory> by_id;
  for (std::size_t s = 0; s < sequence.sweeps.size(); ++s) {
    for (auto& m : modal_instances(sequence.sweeps[s], taxonomy, s)) {
      auto& t = by_id[m.instance_id];
      t.instance_id = m.instance_id;
      t.class_id = m.class_id;
      t.aggregated_extent = t.aggregated_extent.cwiseMax(m.extent);
      t.records.push_back(m);
    }
  }
  std::vector<InstanceTrajectory> out;
  out.reserve(by_id.size());
  for (auto& [id, t] : by_id) out.push_back(std::move(t));
  return out;
}

const char* to_string(ExtentVariant v) {
  switch (v) {
    case ExtentVariant::sw: return "SW";
    case ExtentVariant::max: return "MAX";
    case ExtentVariant::cwm: return "CWM";
    case ExtentVariant::dsb: return "DSB";
  }
  return "?";
}

ExtentVariant parse_extent_variant(const std::string& name) {
  std::string up;
  for (char c : name) up.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (up == "SW") return ExtentVariant::sw;
  if (up == "MAX") return ExtentVariant::max;
  if (up == "CWM") return ExtentVariant::cwm;
  if (up == "DSB") return ExtentVariant::dsb;
  throw Error(Errc::invalid_argument, "unknown extent strategy '" + name + "'");
}

void ExtentStrategy::validate() const {
  const bool needs_dsb = variant == ExtentVariant::dsb;
  const bool needs_cwm = variant == ExtentVariant::cwm;
  if (needs_dsb != dsb_min_points.has_value()) {
    throw Error(Errc::invalid_argument, "dsb_min_points is required by DSB and only by DSB");
  }
  if (needs_cwm != cwm_stats.has_value()) {
    throw Error(Errc::invalid_argument, "cwm_stats is required by CWM and only by CWM");
  }
  if (needs_dsb && *dsb_min_points < 1) {
    throw Error(Errc::invalid_argument, "dsb_min_points must be >= 1");
  }
  if (!(cwm_small_fraction > 0.0)) {
    throw Error(Errc::invalid_argument, "cwm_small_fraction must be positive");
  }
}

std::vector<TrainingExtent> aggregate_extent(const InstanceTrajectory& trajectory,
                                             const ExtentStrategy& strategy) {
  strategy.validate();
  if (trajectory.records.empty()) throw Error(Errc::empty_input, "empty trajectory");
  std::vector<TrainingExtent> out;
  out.reserve(trajectory.records.size());
  Vec3 max_r = Vec3::Zero();
  for (const auto& r : trajectory.records) max_r = max_r.cwiseMax(r.extent);

  const Vec3* class_mean = nullptr;
  if (strategy.variant == ExtentVariant::cwm) {
    auto it = strategy.cwm_stats->find(trajectory.class_id);
    if (it != strategy.cwm_stats->end()) class_mean = &it->second;
  }
  for (const auto& r : trajectory.records) {
    TrainingExtent t;
    t.extent = r.extent;
    switch (strategy.variant) {
      case ExtentVariant::sw:
        break;
      case ExtentVariant::max:
        t.extent = max_r;
        break;
      case ExtentVariant::cwm:
        if (class_mean != nullptr &&
            r.extent.maxCoeff() < strategy.cwm_small_fraction * class_mean->maxCoeff()) {
          t.extent = *class_mean;
          t.replaced = true;
        }
        break;
      case ExtentVariant::dsb:
        t.excluded = r.point_count < *strategy.dsb_min_points;
        break;
    }
    out.push_back(t);
  }
  return out;
}

CwmStats class_wise_mean_extents(std::span<const InstanceTrajectory> trajectories,
                                 const Taxonomy& taxonomy) {
  std::map<ClassId, std::pair<Vec3, int>> acc;
  for (const auto& t : trajectories) {
    if (!taxonomy.is_thing(t.class_id) || t.records.empty()) continue;
    Vec3 max_r = Vec3::Zero();
    for (const auto& r : t.records) max_r = max_r.cwiseMax(r.extent);
    auto& a = acc.try_emplace(t.class_id, Vec3::Zero(), 0).first->second;
    a.first += max_r;
    a.second += 1;
  }
  CwmStats out;
  for (const auto& [cls, a] : acc) out[cls] = a.first / a.second;
  return out;
}

CwmStats class_wise_mean_extents(std::span<const SweepSequence> sequences,
                                 const Taxonomy& taxonomy) {
  std::vector<InstanceTrajectory> all;
  for (const auto& seq : sequences) {
    auto t = extract_trajectories(seq, taxonomy);
    all.insert(all.end(), std::make_move_iterator(t.begin()), std::make_move_iterator(t.end()));
  }
  return class_wise_mean_extents(all, taxonomy);
}

void write_cwm(std::ostream& out, const CwmStats& stats) {
  const auto old = out.precision(17);
  for (const auto& [cls, r] : stats) {
    out << cls << '\t' << r.x() << '\t' << r.y() << '\t' << r.z() << '\n';
  }
  out.precision(old);
}

CwmStats read_cwm(std::istream& in) {
  CwmStats out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    long cls = -1;
    double x, y, z;
    if (!(ss >> cls >> x >> y >> z) || cls < 0 || cls > 0xFFFF) {
      throw Error(Errc::parse_error, "cwm line " + std::to_string(line_no));
    }
    out[static_cast<ClassId>(cls)] = Vec3(x, y, z);
  }
  return out;
}

double heatmap_sigma(const Vec3& extent, const GridSpec& spec, const HeatmapConfig& config) {
  const double cell = std::min(spec.bev_cell_x(), spec.bev_cell_y());
  return std::max(std::max(extent.x(), extent.y()), config.sigma_min_cells * cell);
}

BevTargets render_bev_targets(std::span<const BevInstance> instances, const GridSpec& spec,
                              const Taxonomy& taxonomy, const HeatmapConfig& config) {
  spec.validate();
  BevTargets out;
  out.channels = static_cast<int>(taxonomy.num_things());
  out.width = spec.bev_width();
  out.depth = spec.bev_depth();
  const std::size_t plane = static_cast<std::size_t>(out.width) * out.depth;
  out.heatmap.assign(plane * out.channels, 0.0);
  out.height.assign(plane, 0.0);
  out.velocity.assign(plane * 2, 0.0);
  out.valid_mask.assign(plane, 0);

  for (const auto& inst : instances) {
    const int k = taxonomy.thing_index(inst.class_id);
    if (k < 0) throw Error(Errc::invalid_argument, "heatmap instance is not a thing class");
    int cx, cy;
    if (!spec.bev_cell_of(inst.center.x(), inst.center.y(), cx, cy)) {
      throw Error(Errc::out_of_range, "instance centre outside the BEV grid");
    }
    const double sigma = heatmap_sigma(inst.extent, spec, config);
    const double support = config.truncate_sigmas * sigma;
    const int rx = static_cast<int>(std::ceil(support / spec.bev_cell_x()));
    const int ry = static_cast<int>(std::ceil(support / spec.bev_cell_y()));
    double* channel = out.heatmap.data() + static_cast<std::size_t>(k) * plane;
    for (int bx = std::max(0, cx - rx); bx <= std::min(out.width - 1, cx + rx); ++bx) {
      for (int by = std::max(0, cy - ry); by <= std::min(out.depth - 1, cy + ry); ++by) {
        // Integer cell offsets keep the peak exactly at the centre cell.
        const double dx = (bx - cx) * spec.bev_cell_x();
        const double dy = (by - cy) * spec.bev_cell_y();
        const double d2 = dx * dx + dy * dy;
        if (d2 > support * support) continue;
        const double g = inst.amplitude * std::exp(-d2 / (2.0 * sigma * sigma));
        double& cell = channel[out.cell(bx, by)];
        cell = std::max(cell, g);
      }
    }
    const auto flat = out.cell(cx, cy);
    out.height[flat] = inst.center.z();
    out.velocity[2 * flat] = inst.velocity.x();
    out.velocity[2 * flat + 1] = inst.velocity.y();
    out.valid_mask[flat] = 1;
  }
  return out;
}

Vec2 velocity_target(const InstanceTrajectory& trajectory, std::size_t record_index, double dt) {
  if (record_index >= trajectory.records.size()) {
    throw Error(Errc::out_of_range, "record index past trajectory end");
  }
  if (!(dt > 0.0)) throw Error(Errc::invalid_argument, "dt must be positive");
  const auto& recs = trajectory.records;
  const std::size_t s = recs[record_index].sweep_index;
  const ModalInstance* prev = nullptr;
  const ModalInstance* next = nullptr;
  if (record_index > 0 && recs[record_index - 1].sweep_index + 1 == s) {
    prev = &recs[record_index - 1];
  }
  if (record_index + 1 < recs.size() && recs[record_index + 1].sweep_index == s + 1) {
    next = &recs[record_index + 1];
  }
  const Vec3& here = recs[record_index].center;
  Vec3 v = Vec3::Zero();
  if (prev && next) {
    v = (next->center - prev->center) / (2.0 * dt);
  } else if (next) {
    v = (next->center - here) / dt;
  } else if (prev) {
    v = (here - prev->center) / dt;
  }
  return v.head<2>();
}

std::vector<std::uint8_t> membership_target(std::span<const std::uint32_t> instance_points,
                                            std::span<const std::uint32_t> roi_points) {
  std::unordered_set<std::uint32_t> members(instance_points.begin(), instance_points.end());
  std::vector<std::uint8_t> out;
  out.reserve(roi_points.size());
  for (auto pi : roi_points) out.push_back(members.count(pi) ? 1 : 0);
  return out;
}

}  // namespace modal
