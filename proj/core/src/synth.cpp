#include "modal/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>

namespace modal {

Taxonomy synthetic_taxonomy() {
  return Taxonomy({{0, "unlabeled", ClassKind::ignore},
                   {synth_class::car, "car", ClassKind::thing},
                   {synth_class::truck, "truck", ClassKind::thing},
                   {synth_class::pedestrian, "pedestrian", ClassKind::thing},
                   {synth_class::road, "road", ClassKind::stuff},
                   {synth_class::building, "building", ClassKind::stuff}},
                  15);
}

std::vector<BoxPrior> default_box_priors() {
  return {
      {synth_class::car, {4.5, 1.8, 1.5}, {0.3, 0.1, 0.1}, 0.6, 2.0, 8.0},
      {synth_class::truck, {8.0, 2.5, 3.0}, {1.0, 0.1, 0.3}, 0.25, 2.0, 6.0},
      {synth_class::pedestrian, {0.6, 0.6, 1.75}, {0.05, 0.05, 0.1}, 0.15, 0.5, 1.5},
  };
}

void SceneConfig::validate() const {
  if (sweep_count < 1 || !(period > 0.0)) {
    throw Error(Errc::invalid_argument, "sweep_count and period must be positive");
  }
  if (!(density_ref > 0.0) || !(ref_range > 0.0)) {
    throw Error(Errc::invalid_argument, "surface density must be positive");
  }
  if (ground_density < 0.0 || !(jitter >= 0.0 && jitter <= 1.0)) {
    throw Error(Errc::invalid_argument, "bad ground density or jitter");
  }
  if (min_instances < 0 || max_instances < min_instances || priors.empty()) {
    throw Error(Errc::invalid_argument, "bad instance count range or empty priors");
  }
  if (!(min_range >= 0.0) || !(max_range > min_range)) {
    throw Error(Errc::invalid_argument, "bad object range band");
  }
  if (ambiguous && (group_size_max < 2 || group_gap_min < 0.0 || group_gap_max < group_gap_min ||
                    !(group_scale_min > 0.0) || group_scale_max < group_scale_min)) {
    throw Error(Errc::invalid_argument, "bad group parameters");
  }
}

Vec3 face_normal(Face f) {
  switch (f) {
    case Face::pos_x: return {1, 0, 0};
    case Face::neg_x: return {-1, 0, 0};
    case Face::pos_y: return {0, 1, 0};
    case Face::neg_y: return {0, -1, 0};
    case Face::pos_z: return {0, 0, 1};
  }
  return Vec3::Zero();
}

Face dominant_face(const Box& box, const Vec3& sensor) {
  const Vec3 dir = sensor - box.center;
  Face best = Face::pos_x;
  double best_dot = -std::numeric_limits<double>::infinity();
  for (int f = 0; f < 5; ++f) {
    const double d = face_normal(static_cast<Face>(f)).dot(dir);
    if (d > best_dot) {
      best_dot = d;
      best = static_cast<Face>(f);
    }
  }
  return best;
}

std::vector<Vec3> sample_face(const Box& box, Face face, const Vec3& sensor,
                              const SurfaceSampling& sampling, std::mt19937_64& rng) {
  const Vec3 n = face_normal(face);
  const int axis = face == Face::pos_x || face == Face::neg_x   ? 0
                   : face == Face::pos_y || face == Face::neg_y ? 1
                                                                : 2;
  const int ua = (axis + 1) % 3;
  const int va = (axis + 2) % 3;
  const Vec3 face_center = box.center + n.cwiseProduct(box.half);
  const double range = std::max((face_center - sensor).norm(), 1e-3);
  const double spacing = (1.0 / std::sqrt(sampling.density_ref)) * (range / sampling.ref_range);
  const double lu = 2.0 * box.half[ua];
  const double lv = 2.0 * box.half[va];
  const int nu = std::max(1, static_cast<int>(std::lround(lu / spacing)));
  const int nv = std::max(1, static_cast<int>(std::lround(lv / spacing)));
  const double cu = lu / nu;
  const double cv = lv / nv;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(nu) * nv);
  for (int i = 0; i < nu; ++i) {
    for (int j = 0; j < nv; ++j) {
      Vec3 p = face_center;
      p[ua] = box.center[ua] - box.half[ua] + (i + 0.5 + 0.5 * sampling.jitter * u(rng)) * cu;
      p[va] = box.center[va] - box.half[va] + (j + 0.5 + 0.5 * sampling.jitter * u(rng)) * cv;
      out.push_back(p);
    }
  }
  return out;
}

std::vector<std::pair<Vec3, Face>> sample_box_surface(const Box& box, const Vec3& sensor,
                                                      const SurfaceSampling& sampling,
                                                      bool occlusion, std::mt19937_64& rng) {
  std::vector<Face> faces;
  if (occlusion) {
    faces.push_back(dominant_face(box, sensor));
  } else {
    faces = {Face::pos_x, Face::neg_x, Face::pos_y, Face::neg_y, Face::pos_z};
  }
  std::vector<std::pair<Vec3, Face>> out;
  for (Face f : faces) {
    for (const auto& p : sample_face(box, f, sensor, sampling, rng)) out.push_back({p, f});
  }
  return out;
}

Box GtObject::box_at(double t) const {
  Box b;
  b.center = start;
  b.center.x() += velocity.x() * t;
  b.center.y() += velocity.y() * t;
  b.half = half_size;
  return b;
}

namespace {

double quantize(double v) { return static_cast<double>(static_cast<float>(v)); }

bool separated(const Box& a, const Box& b, double gap) {
  const double gx = std::abs(a.center.x() - b.center.x()) - (a.half.x() + b.half.x());
  const double gy = std::abs(a.center.y() - b.center.y()) - (a.half.y() + b.half.y());
  return std::max(gx, gy) >= gap;
}

const BoxPrior& pick_prior(const std::vector<BoxPrior>& priors, std::mt19937_64& rng) {
  std::vector<double> w;
  for (const auto& p : priors) w.push_back(p.weight);
  std::discrete_distribution<std::size_t> d(w.begin(), w.end());
  return priors[d(rng)];
}

Vec3 sample_half_size(const BoxPrior& prior, double scale, bool along_y, std::mt19937_64& rng) {
  Vec3 full;
  for (int a = 0; a < 3; ++a) {
    std::normal_distribution<double> n(prior.mean_size[a], prior.std_size[a]);
    full[a] = std::max(0.3 * prior.mean_size[a], n(rng));
  }
  full.head<2>() *= scale;
  if (along_y) std::swap(full.x(), full.y());
  return 0.5 * full;
}

}  // namespace

SyntheticSequence generate_sequence(const SceneConfig& config, const Taxonomy& taxonomy) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double t_end = (config.sweep_count - 1) * config.period;
  const double t_mid = 0.5 * t_end;

  SyntheticSequence out;
  auto& reg = out.registry;
  const int target =
      std::uniform_int_distribution<int>(config.min_instances, config.max_instances)(rng);

  auto fits = [&](const std::vector<GtObject>& cand) {
    for (int s = 0; s < config.sweep_count; ++s) {
      const double t = s * config.period;
      for (const auto& o : cand) {
        const Box b = o.box_at(t);
        const double r = b.center.head<2>().norm();
        if (r < config.min_range || r > config.max_range) return false;
        for (const auto& q : reg) {
          if (!separated(b, q.box_at(t), config.min_gap)) return false;
        }
      }
    }
    return true;
  };

  int group = 0;
  for (int attempt = 0; attempt < config.placement_attempts &&
                        static_cast<int>(reg.size()) < target;
       ++attempt) {
    const BoxPrior& prior = pick_prior(config.priors, rng);
    bool along_y = unit(rng) < 0.5;
    const double speed =
        prior.speed_min + (prior.speed_max - prior.speed_min) * unit(rng);
    const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
    const double angle = 2.0 * std::numbers::pi * unit(rng);
    const double radius = config.min_range + (config.max_range - config.min_range) * unit(rng);
    const Vec2 mid(radius * std::cos(angle), radius * std::sin(angle));

    int members = 1;
    bool platoon = true;
    if (config.ambiguous) {
      members = std::uniform_int_distribution<int>(2, config.group_size_max)(rng);
      platoon = unit(rng) < 0.5;
      if (config.tangential_groups) {
        // queue across the line of sight, long sides facing the sensor
        along_y = std::abs(mid.x()) > std::abs(mid.y());
        platoon = true;
      }
    }
    const Vec2 vel = along_y ? Vec2(0.0, sign * speed) : Vec2(sign * speed, 0.0);
    std::vector<GtObject> cand;
    double cursor = 0.0;
    const int motion_axis = along_y ? 1 : 0;
    const int stack_axis = platoon ? motion_axis : 1 - motion_axis;
    for (int m = 0; m < members; ++m) {
      const double scale =
          config.ambiguous
              ? config.group_scale_min + (config.group_scale_max - config.group_scale_min) * unit(rng)
              : 1.0;
      GtObject o;
      o.class_id = prior.class_id;
      o.half_size = sample_half_size(prior, scale, along_y, rng);
      o.velocity = vel;
      o.group = group;
      if (m > 0) {
        cursor += config.group_gap_min + (config.group_gap_max - config.group_gap_min) * unit(rng);
      }
      Vec3 c(mid.x(), mid.y(), config.ground_z + o.half_size.z());
      c[stack_axis] += cursor + o.half_size[stack_axis];
      cursor += 2.0 * o.half_size[stack_axis];
      o.start = c;
      cand.push_back(o);
    }
    // centre the group on `mid` and rewind to t = 0
    const double shift = 0.5 * cursor;
    for (auto& o : cand) {
      o.start[stack_axis] -= shift;
      o.start.x() -= vel.x() * t_mid;
      o.start.y() -= vel.y() * t_mid;
    }
    if (!fits(cand)) continue;
    for (auto& o : cand) {
      o.id = static_cast<InstanceId>(reg.size() + 1);
      reg.push_back(o);
    }
    ++group;
  }

  // Static stuff walls, kept clear of every object path.
  std::vector<Box> walls;
  for (int w = 0, tries = 0; w < config.building_walls && tries < 200; ++tries) {
    const double angle = 2.0 * std::numbers::pi * unit(rng);
    const double radius = config.max_range - 2.0 + 2.0 * unit(rng);
    Box b;
    b.center = Vec3(radius * std::cos(angle), radius * std::sin(angle), config.ground_z + 2.0);
    const bool wide_x = std::abs(std::sin(angle)) > std::abs(std::cos(angle));
    b.half = wide_x ? Vec3(5.0, 0.15, 2.0) : Vec3(0.15, 5.0, 2.0);
    bool ok = true;
    for (int s = 0; s < config.sweep_count && ok; ++s) {
      for (const auto& o : reg) ok = ok && separated(b, o.box_at(s * config.period), config.min_gap);
    }
    for (const auto& q : walls) ok = ok && separated(b, q, config.min_gap);
    if (!ok) continue;
    walls.push_back(b);
    ++w;
  }

  const Vec3 sensor = Vec3::Zero();
  const SurfaceSampling sampling{config.density_ref, config.ref_range, config.jitter};
  out.sequence.period = config.period;
  out.visible_faces.resize(static_cast<std::size_t>(config.sweep_count));
  for (int s = 0; s < config.sweep_count; ++s) {
    const double t = s * config.period;
    PointCloudSweep sweep;
    sweep.timestamp = t;
    auto add = [&](const Vec3& p, double intensity, ClassId cls, InstanceId id) {
      Point q;
      q.x = quantize(p.x());
      q.y = quantize(p.y());
      q.z = quantize(p.z());
      q.intensity = quantize(intensity);
      sweep.points.push_back(q);
      sweep.sem_labels.push_back(cls);
      sweep.inst_labels.push_back(id);
    };
    auto& faces = out.visible_faces[static_cast<std::size_t>(s)];
    faces.resize(reg.size());
    std::vector<Box> boxes;
    for (std::size_t i = 0; i < reg.size(); ++i) {
      const Box b = reg[i].box_at(t);
      boxes.push_back(b);
      for (const auto& [p, f] : sample_box_surface(b, sensor, sampling, config.occlusion, rng)) {
        add(p, 0.5, reg[i].class_id, reg[i].id);
        if (faces[i].empty() || faces[i].back() != f) faces[i].push_back(f);
      }
    }
    for (const auto& b : walls) {
      for (const auto& [p, f] : sample_box_surface(b, sensor, sampling, true, rng)) {
        add(p, 0.3, synth_class::building, kNoInstance);
      }
    }
    const double area = std::numbers::pi * config.ground_extent * config.ground_extent;
    const auto n_ground = static_cast<long>(std::lround(config.ground_density * area));
    for (long g = 0; g < n_ground; ++g) {
      const double r = config.ground_extent * std::sqrt(unit(rng));
      const double a = 2.0 * std::numbers::pi * unit(rng);
      const Vec3 p(r * std::cos(a), r * std::sin(a), config.ground_z);
      bool covered = false;
      for (const auto& b : boxes) {
        covered = covered || (std::abs(p.x() - b.center.x()) <= b.half.x() &&
                              std::abs(p.y() - b.center.y()) <= b.half.y());
      }
      for (const auto& b : walls) {
        covered = covered || (std::abs(p.x() - b.center.x()) <= b.half.x() &&
                              std::abs(p.y() - b.center.y()) <= b.half.y());
      }
      if (!covered) add(p, 0.1, synth_class::road, kNoInstance);
    }
    out.sequence.sweeps.push_back(std::move(sweep));
  }
  out.sequence.validate(taxonomy);
  return out;
}

void DetectorNoise::validate() const {
  for (double p : {drop_probability, semantic_flip}) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(Errc::invalid_argument, "probability outside [0,1]");
  }
  for (double s : {center_jitter, confidence_noise, velocity_noise, extent_noise, centroid_noise}) {
    if (!(s >= 0.0)) throw Error(Errc::invalid_argument, "noise sigma must be >= 0");
  }
}

SynthFeatureProvider::SynthFeatureProvider(std::vector<double> point_features, BevMap bev)
    : point_features_(std::move(point_features)), bev_(std::move(bev)) {}

std::span<const double> SynthFeatureProvider::point_features(std::size_t point_index) const {
  if ((point_index + 1) * kDims > point_features_.size()) {
    throw Error(Errc::out_of_range, "point index outside the feature block");
  }
  return {point_features_.data() + point_index * kDims, kDims};
}

std::vector<double> SynthFeatureProvider::bev_features(double x, double y) const {
  return interpolate_bev(bev_, x, y);
}

std::shared_ptr<const SynthFeatureProvider> make_synth_features(
    const PointCloudSweep& sweep, const Taxonomy& taxonomy, const GridSpec& spec,
    double ground_z, double centroid_noise, std::mt19937_64& rng) {
  const std::size_t n = sweep.size();
  const std::size_t D = SynthFeatureProvider::kDims;
  std::unordered_map<long, int> column_count;
  std::vector<long> column(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    int bx, by;
    if (spec.bev_cell_of(sweep.points[i].x, sweep.points[i].y, bx, by)) {
      column[i] = static_cast<long>(bx) * spec.bev_depth() + by;
      ++column_count[column[i]];
    }
  }
  std::map<InstanceId, std::pair<Vec2, long>> sums;
  for (std::size_t i = 0; i < n; ++i) {
    if (sweep.inst_labels[i] == kNoInstance || !taxonomy.is_thing(sweep.sem_labels[i])) continue;
    auto& s = sums.try_emplace(sweep.inst_labels[i], Vec2::Zero(), 0L).first->second;
    s.first += Vec2(sweep.points[i].x, sweep.points[i].y);
    ++s.second;
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  std::map<InstanceId, Vec2> estimate;
  for (const auto& [id, s] : sums) {
    Vec2 c = s.first / static_cast<double>(s.second);
    c.x() += centroid_noise * noise(rng);
    c.y() += centroid_noise * noise(rng);
    estimate[id] = c;
  }
  std::vector<double> feats(n * D, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = sweep.points[i];
    double* f = feats.data() + i * D;
    f[0] = column[i] >= 0 ? std::log1p(column_count[column[i]]) / 5.0 : 0.0;
    f[1] = (p.z - ground_z) / 3.0;
    f[2] = std::hypot(p.x, p.y) / spec.range;
    auto it = estimate.find(sweep.inst_labels[i]);
    if (sweep.inst_labels[i] != kNoInstance && it != estimate.end()) {
      f[3] = it->second.x() - p.x;
      f[4] = it->second.y() - p.y;
    }
  }
  auto grid = voxelize(sweep.points, spec);
  attach_point_features(grid, feats, D);
  BevMap bev;
  if (grid.cells().empty()) {
    bev.width = spec.bev_width();
    bev.depth = spec.bev_depth();
    bev.channels = static_cast<int>(D);
    bev.cell_x = spec.bev_cell_x();
    bev.cell_y = spec.bev_cell_y();
    bev.origin_x = -spec.range;
    bev.origin_y = -spec.range;
    bev.data.assign(static_cast<std::size_t>(bev.width) * bev.depth * D, 0.0);
  } else {
    bev = flatten_bev(grid, BevReducer::mean);
  }
  return std::make_shared<SynthFeatureProvider>(std::move(feats), std::move(bev));
}

PredictedMaps simulate_sweep(const SyntheticSequence& seq, std::size_t sweep,
                             const std::vector<InstanceTrajectory>& trajectories,
                             const Taxonomy& taxonomy, const GridSpec& spec,
                             const DetectorConfig& config) {
  config.noise.validate();
  config.strategy.validate();
  const auto& src = seq.sequence.sweeps.at(sweep);
  const auto& noise = config.noise;
  std::mt19937_64 rng(config.seed * 0x9E3779B97F4A7C15ULL + sweep + 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  PredictedMaps maps;
  maps.point_sem = src.sem_labels;
  const auto& evaluated = taxonomy.evaluated_ids();
  for (auto& c : maps.point_sem) {
    const double u = unit(rng);
    const auto pick = static_cast<std::size_t>(unit(rng) * (evaluated.size() - 1));
    if (u < noise.semantic_flip && evaluated.size() > 1) {
      std::vector<ClassId> others;
      for (auto id : evaluated) {
        if (id != c) others.push_back(id);
      }
      c = others[std::min(pick, others.size() - 1)];
    }
  }

  struct Rendered {
    BevInstance inst;
    Vec3 extent;
  };
  std::vector<Rendered> rendered;
  for (const auto& traj : trajectories) {
    // Draw every instance's noise up front so all strategies see identical draws.
    const double drop = unit(rng);
    const double jx = gauss(rng), jy = gauss(rng);
    const double jc = gauss(rng);
    const double vx = gauss(rng), vy = gauss(rng);
    const double ex = gauss(rng), ey = gauss(rng), ez = gauss(rng);
    std::size_t k = traj.records.size();
    for (std::size_t r = 0; r < traj.records.size(); ++r) {
      if (traj.records[r].sweep_index == sweep) k = r;
    }
    if (k == traj.records.size()) continue;
    if (drop < noise.drop_probability) continue;
    const auto extents = aggregate_extent(traj, config.strategy);
    if (extents[k].excluded) continue;
    const auto& rec = traj.records[k];
    Rendered out;
    out.inst.center = rec.center;
    out.inst.center.x() += noise.center_jitter * jx;
    out.inst.center.y() += noise.center_jitter * jy;
    out.inst.extent = extents[k].extent;
    out.inst.class_id = traj.class_id;
    out.inst.amplitude = std::clamp(1.0 - std::abs(noise.confidence_noise * jc), 0.01, 1.0);
    const auto obj = std::find_if(seq.registry.begin(), seq.registry.end(),
                                  [&](const GtObject& o) { return o.id == traj.instance_id; });
    const Vec2 v = obj == seq.registry.end() ? Vec2::Zero() : obj->velocity;
    out.inst.velocity = v + noise.velocity_noise * Vec2(vx, vy);
    Vec3 e = extents[k].extent;
    e.x() *= std::max(0.0, 1.0 + noise.extent_noise * ex);
    e.y() *= std::max(0.0, 1.0 + noise.extent_noise * ey);
    e.z() *= std::max(0.0, 1.0 + noise.extent_noise * ez);
    out.extent = e;
    int bx, by;
    if (!spec.bev_cell_of(out.inst.center.x(), out.inst.center.y(), bx, by)) continue;
    rendered.push_back(out);
  }
  std::vector<BevInstance> insts;
  for (const auto& r : rendered) insts.push_back(r.inst);
  maps.bev = render_bev_targets(insts, spec, taxonomy, config.heatmap);
  const std::size_t plane = static_cast<std::size_t>(maps.bev.width) * maps.bev.depth;
  maps.extent.assign(3 * plane, 0.0);
  for (const auto& r : rendered) {
    int bx, by;
    spec.bev_cell_of(r.inst.center.x(), r.inst.center.y(), bx, by);
    const auto cell = maps.bev.cell(bx, by);
    for (int a = 0; a < 3; ++a) maps.extent[3 * cell + a] = r.extent[a];
  }
  GridSpec feature_spec = spec;
  feature_spec.bev_downsample *= config.feature_downsample;
  feature_spec.validate();
  maps.features = make_synth_features(src, taxonomy, feature_spec, config.ground_z,
                                      noise.centroid_noise, rng);
  return maps;
}

std::vector<PredictedMaps> simulate_detector(const SyntheticSequence& seq,
                                             const Taxonomy& taxonomy, const GridSpec& spec,
                                             const DetectorConfig& config) {
  const auto trajectories = extract_trajectories(seq.sequence, taxonomy);
  std::vector<PredictedMaps> out;
  out.reserve(seq.sequence.sweeps.size());
  for (std::size_t s = 0; s < seq.sequence.sweeps.size(); ++s) {
    out.push_back(simulate_sweep(seq, s, trajectories, taxonomy, spec, config));
  }
  return out;
}

}  // namespace modal
