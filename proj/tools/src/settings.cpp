#include "settings.hpp"

#include <sstream>

namespace modal::cli {

namespace {

const std::vector<std::pair<const char*, const char*>>& defaults() {
  static const std::vector<std::pair<const char*, const char*>> table = {
      {"seed", "1"},
      {"sequences", "4"},
      {"sweeps", "10"},
      {"period", "0.5"},
      {"min_instances", "6"},
      {"max_instances", "10"},
      {"occlusion", "true"},
      {"ambiguous", "false"},
      {"tangential_groups", "false"},
      {"group_scale_min", "0.7"},
      {"group_scale_max", "1.3"},
      {"density_ref", "1000"},
      {"grid.voxel_x", "0.16"},
      {"grid.voxel_y", "0.16"},
      {"grid.voxel_z", "0.2"},
      {"grid.range", "40"},
      {"grid.z_min", "-3"},
      {"grid.z_max", "3"},
      {"grid.bev_downsample", "1"},
      {"strategy", "max"},
      {"dsb_min_points", "300"},
      {"cwm_small_fraction", "0.25"},
      {"noise.center_jitter", "0"},
      {"noise.confidence_noise", "0"},
      {"noise.drop_probability", "0"},
      {"noise.semantic_flip", "0"},
      {"noise.velocity_noise", "0"},
      {"noise.extent_noise", "0"},
      {"noise.centroid_noise", "0"},
      {"feature_downsample", "1"},
      {"nms.threshold", "0.3"},
      {"nms.max_dets", "500"},
      {"roi.fraction", "0.1"},
      {"roi.floor", "0.1"},
      {"fusion.argmax", "false"},
      {"class_mean_floor", "true"},
      {"membership", "nn"},
      {"tracker.default_gate", "2"},
      {"tracker.max_age", "2"},
      {"tracker.cwm_gates", "true"},
      {"train.features", "full"},
      {"train.epochs", "20"},
      {"train.batch_size", "32"},
      {"train.hidden", "64"},
      {"train.depth", "4"},
      {"train.optimizer", "adam"},
      {"train.learning_rate", "0.001"},
      {"train.max_points_per_roi", "64"},
      {"train.balanced", "true"},
      {"train.pair_jitter", "0.3"},
  };
  return table;
}

int positive(long v, const char* key) {
  if (v < 1) throw Error(Errc::invalid_argument, std::string(key) + " must be >= 1");
  return static_cast<int>(v);
}

}  // namespace

Settings Settings::resolve(const std::string& config_path,
                           const std::vector<std::pair<std::string, std::string>>& overrides) {
  Settings s;
  for (const auto& [k, v] : defaults()) s.cfg_.set(k, v);
  auto apply = [&](const std::string& key, const std::string& value) {
    if (!s.cfg_.has(key)) throw Error(Errc::invalid_argument, "unknown config key '" + key + "'");
    s.cfg_.set(key, value);
  };
  if (!config_path.empty()) {
    const auto file = RunConfig::load(config_path);
    for (const auto& [k, v] : file.values()) apply(k, v);
  }
  for (const auto& [k, v] : overrides) apply(k, v);
  s.cfg_.apply_seed_override();
  // Surface type errors up front rather than halfway through a run.
  try {
    (void)s.seed();
    (void)s.sequences();
    (void)s.scene();
    (void)s.grid();
    (void)s.detector();
    (void)s.pipeline();
    (void)s.train();
    (void)s.pair_jitter();
    (void)s.class_mean_floor();
    (void)s.cwm_gates();
    (void)parse_extent_variant(s.cfg_.get("strategy", "max"));
  } catch (const Error& e) {
    throw Error(Errc::invalid_argument, e.what());
  }
  return s;
}

std::string Settings::text() const {
  std::ostringstream ss;
  for (const auto& [k, v] : cfg_.values()) ss << k << " = " << v << '\n';
  return ss.str();
}

std::uint64_t Settings::seed() const {
  const long v = cfg_.get_int("seed", 1);
  if (v < 0) throw Error(Errc::invalid_argument, "seed must be >= 0");
  return static_cast<std::uint64_t>(v);
}

int Settings::sequences() const { return positive(cfg_.get_int("sequences", 4), "sequences"); }

GridSpec Settings::grid() const {
  GridSpec g;
  g.voxel_size = Vec3(cfg_.get_double("grid.voxel_x", 0.16), cfg_.get_double("grid.voxel_y", 0.16),
                      cfg_.get_double("grid.voxel_z", 0.2));
  g.range = cfg_.get_double("grid.range", 40.0);
  g.z_min = cfg_.get_double("grid.z_min", -3.0);
  g.z_max = cfg_.get_double("grid.z_max", 3.0);
  g.bev_downsample = static_cast<int>(cfg_.get_int("grid.bev_downsample", 1));
  g.validate();
  return g;
}

SceneConfig Settings::scene() const {
  SceneConfig c;
  c.sweep_count = positive(cfg_.get_int("sweeps", 10), "sweeps");
  c.period = cfg_.get_double("period", 0.5);
  c.min_instances = static_cast<int>(cfg_.get_int("min_instances", 6));
  c.max_instances = static_cast<int>(cfg_.get_int("max_instances", 10));
  c.occlusion = cfg_.get_bool("occlusion", true);
  c.ambiguous = cfg_.get_bool("ambiguous", false);
  c.tangential_groups = cfg_.get_bool("tangential_groups", false);
  c.group_scale_min = cfg_.get_double("group_scale_min", 0.7);
  c.group_scale_max = cfg_.get_double("group_scale_max", 1.3);
  c.density_ref = cfg_.get_double("density_ref", 1000.0);
  c.validate();
  return c;
}

DetectorNoise Settings::noise() const {
  DetectorNoise n;
  n.center_jitter = cfg_.get_double("noise.center_jitter", 0.0);
  n.confidence_noise = cfg_.get_double("noise.confidence_noise", 0.0);
  n.drop_probability = cfg_.get_double("noise.drop_probability", 0.0);
  n.semantic_flip = cfg_.get_double("noise.semantic_flip", 0.0);
  n.velocity_noise = cfg_.get_double("noise.velocity_noise", 0.0);
  n.extent_noise = cfg_.get_double("noise.extent_noise", 0.0);
  n.centroid_noise = cfg_.get_double("noise.centroid_noise", 0.0);
  n.validate();
  return n;
}

DetectorConfig Settings::detector() const {
  DetectorConfig d;
  d.noise = noise();
  d.ground_z = SceneConfig{}.ground_z;
  d.feature_downsample =
      positive(cfg_.get_int("feature_downsample", 1), "feature_downsample");
  return d;
}

ExtentStrategy Settings::strategy(const CwmStats& cwm) const {
  ExtentStrategy s;
  switch (parse_extent_variant(cfg_.get("strategy", "max"))) {
    case ExtentVariant::sw: s = ExtentStrategy::sw(); break;
    case ExtentVariant::max: s = ExtentStrategy::max(); break;
    case ExtentVariant::cwm: s = ExtentStrategy::cwm(cwm); break;
    case ExtentVariant::dsb:
      s = ExtentStrategy::dsb(static_cast<int>(cfg_.get_int("dsb_min_points", 300)));
      break;
  }
  s.cwm_small_fraction = cfg_.get_double("cwm_small_fraction", 0.25);
  s.validate();
  return s;
}

RoiMargin Settings::margin() const {
  return {cfg_.get_double("roi.fraction", 0.1), cfg_.get_double("roi.floor", 0.1)};
}

PipelineConfig Settings::pipeline() const {
  PipelineConfig p;
  p.nms.threshold = cfg_.get_double("nms.threshold", 0.3);
  p.nms.max_dets = positive(cfg_.get_int("nms.max_dets", 500), "nms.max_dets");
  p.fusion.margin = margin();
  p.fusion.argmax = cfg_.get_bool("fusion.argmax", false);
  p.tracker.default_gate = cfg_.get_double("tracker.default_gate", 2.0);
  p.tracker.max_age = static_cast<int>(cfg_.get_int("tracker.max_age", 2));
  return p;
}

MembershipTrainConfig Settings::train() const {
  MembershipTrainConfig t;
  t.features = parse_feature_set(cfg_.get("train.features", "full"));
  t.epochs = positive(cfg_.get_int("train.epochs", 20), "train.epochs");
  t.batch_size = positive(cfg_.get_int("train.batch_size", 32), "train.batch_size");
  t.hidden = positive(cfg_.get_int("train.hidden", 64), "train.hidden");
  t.depth = positive(cfg_.get_int("train.depth", 4), "train.depth");
  const auto opt = cfg_.get("train.optimizer", "adam");
  if (opt == "adam") {
    t.optimizer = OptimizerKind::adam;
  } else if (opt == "sgd") {
    t.optimizer = OptimizerKind::sgd;
  } else {
    throw Error(Errc::invalid_argument, "train.optimizer must be sgd or adam");
  }
  t.learning_rate = cfg_.get_double("train.learning_rate", 1e-3);
  t.max_points_per_roi =
      positive(cfg_.get_int("train.max_points_per_roi", 64), "train.max_points_per_roi");
  t.balanced = cfg_.get_bool("train.balanced", true);
  t.roi_margin = margin();
  t.seed = seed();
  return t;
}

double Settings::pair_jitter() const { return cfg_.get_double("train.pair_jitter", 0.3); }
bool Settings::class_mean_floor() const { return cfg_.get_bool("class_mean_floor", true); }
bool Settings::cwm_gates() const { return cfg_.get_bool("tracker.cwm_gates", true); }

}  // namespace modal::cli
