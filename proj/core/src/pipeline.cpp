#include "modal/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <optional>
#include <thread>

namespace modal {

GridSpec experiment_grid() {
  GridSpec g;
  g.voxel_size = Vec3(0.16, 0.16, 0.2);
  g.range = 40.0;
  g.z_min = -3.0;
  g.z_max = 3.0;
  g.bev_downsample = 1;
  g.validate();
  return g;
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  std::vector<std::exception_ptr> errors(n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::uint64_t sequence_seed(std::uint64_t corpus_seed, std::size_t index) {
  // splitmix64
  std::uint64_t z = corpus_seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

SyntheticSequence corpus_sequence(const SceneConfig& base, std::uint64_t corpus_seed,
                                  std::size_t index, const Taxonomy& taxonomy) {
  SceneConfig cfg = base;
  cfg.seed = sequence_seed(corpus_seed, index);
  return generate_sequence(cfg, taxonomy);
}

MembershipFactory nn_membership_factory(const RoiMargin& margin) {
  return [margin](const SweepInput& in, std::span<const Detection> dets) {
    return std::make_unique<NnMembership>(in.points, in.maps->point_sem, dets, margin);
  };
}

MembershipFactory mlp_membership_factory(const TrainedMembership& model,
                                         const Taxonomy& taxonomy) {
  return [&model, &taxonomy](const SweepInput& in, std::span<const Detection> dets)
             -> std::unique_ptr<MembershipFunction> {
    if (!in.maps->features) throw Error(Errc::missing_input, "sweep has no feature maps");
    return std::make_unique<MlpMembership>(model.model, model.features, in.points,
                                           in.maps->point_sem, dets, *in.maps->features,
                                           taxonomy);
  };
}

SequenceScore run_synthetic_sequence(const SyntheticSequence& seq, const Taxonomy& taxonomy,
                                     const GridSpec& spec, const DetectorConfig& detector,
                                     const MembershipFactory& membership,
                                     const PipelineConfig& pipeline) {
  const auto trajectories = extract_trajectories(seq.sequence, taxonomy);
  Tracker tracker(pipeline.tracker);
  SequenceScore out;
  for (std::size_t s = 0; s < seq.sequence.sweeps.size(); ++s) {
    const auto& sweep = seq.sequence.sweeps[s];
    const auto maps = simulate_sweep(seq, s, trajectories, taxonomy, spec, detector);
    const SweepInput in{sweep.points, &maps};
    auto t = track_sweep(tracker, s, in, seq.sequence.period, spec, taxonomy, membership,
                         pipeline);
    const auto mc = membership_accuracy(sweep.points, labeling_of(sweep), t.assigned,
                                        t.detections, taxonomy, pipeline.fusion.margin);
    out.membership.correct += mc.correct;
    out.membership.total += mc.total;
    out.labelings.push_back(std::move(t.labeling));
    out.detections.push_back(std::move(t.detections));
  }
  return out;
}

double relative_extent_error(const Vec3& estimate, const Vec3& truth) {
  double worst = 0.0;
  for (int a = 0; a < 3; ++a) {
    if (!(truth[a] > 0.0)) throw Error(Errc::invalid_argument, "true extent must be positive");
    worst = std::max(worst, std::abs(estimate[a] - truth[a]) / truth[a]);
  }
  return worst;
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

struct PartialScore {
  PqAccumulator pq;
  LstqAccumulator lstq;
  MembershipCount membership;

  explicit PartialScore(const Taxonomy& t) : pq(t), lstq(t) {}

  void add(const SyntheticSequence& seq, const SequenceScore& s) {
    std::vector<PanopticLabeling> gt;
    for (std::size_t i = 0; i < seq.sequence.sweeps.size(); ++i) {
      gt.push_back(labeling_of(seq.sequence.sweeps[i]));
      pq.add(gt.back(), s.labelings[i]);
    }
    lstq.add_sequence(gt, s.labelings);
    membership.correct += s.membership.correct;
    membership.total += s.membership.total;
  }

  void merge(const PartialScore& o) {
    pq.merge(o.pq);
    lstq.merge(o.lstq);
    membership.correct += o.membership.correct;
    membership.total += o.membership.total;
  }

  CorpusScore report() const { return {pq.report(), lstq.report(), membership}; }
};

bool has_face(const std::vector<Face>& faces, Face a, Face b) {
  return std::find(faces.begin(), faces.end(), a) != faces.end() ||
         std::find(faces.begin(), faces.end(), b) != faces.end();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

ExtentExperimentConfig::ExtentExperimentConfig() {
  noise.center_jitter = 0.3;
}

const CorpusScore& ExtentExperimentResult::score(ExtentVariant v) const {
  for (const auto& s : strategies) {
    if (s.variant == v) return s.score;
  }
  throw Error(Errc::invalid_argument, std::string("no result for strategy ") + to_string(v));
}

ExtentExperimentResult run_extent_experiment(const ExtentExperimentConfig& config,
                                             const Taxonomy& taxonomy, const GridSpec& spec) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto n = static_cast<std::size_t>(config.sequences);
  ExtentExperimentResult out;

  // Class means come from the whole corpus, as a training-set statistic would.
  std::vector<std::vector<InstanceTrajectory>> trajs(n);
  std::vector<double> max_err, sw_err;
  std::vector<std::vector<double>> max_err_seq(n), sw_err_seq(n);
  parallel_for(n, config.jobs, [&](std::size_t i) {
    const auto seq = corpus_sequence(config.scene, config.seed, i, taxonomy);
    trajs[i] = extract_trajectories(seq.sequence, taxonomy);
    for (const auto& t : trajs[i]) {
      std::size_t obj = 0;
      while (obj < seq.registry.size() && seq.registry[obj].id != t.instance_id) ++obj;
      if (obj == seq.registry.size()) continue;
      const Vec3 truth = seq.registry[obj].half_size;
      std::vector<Face> seen;
      for (const auto& r : t.records) {
        const auto& faces = seq.visible_faces[r.sweep_index][obj];
        seen.insert(seen.end(), faces.begin(), faces.end());
        if (faces.size() == 1) sw_err_seq[i].push_back(relative_extent_error(r.extent, truth));
      }
      if (has_face(seen, Face::pos_x, Face::neg_x) && has_face(seen, Face::pos_y, Face::neg_y)) {
        max_err_seq[i].push_back(relative_extent_error(t.aggregated_extent, truth));
      }
    }
  });
  std::vector<InstanceTrajectory> all;
  for (std::size_t i = 0; i < n; ++i) {
    all.insert(all.end(), trajs[i].begin(), trajs[i].end());
    max_err.insert(max_err.end(), max_err_seq[i].begin(), max_err_seq[i].end());
    sw_err.insert(sw_err.end(), sw_err_seq[i].begin(), sw_err_seq[i].end());
  }
  out.cwm = class_wise_mean_extents(all, taxonomy);
  out.error.max_median = median(max_err);
  out.error.max_samples = max_err.size();
  out.error.sw_median = median(sw_err);
  out.error.sw_samples = sw_err.size();

  const ExtentStrategy strategies[] = {ExtentStrategy::sw(), ExtentStrategy::max(),
                                       ExtentStrategy::cwm(out.cwm),
                                       ExtentStrategy::dsb(config.dsb_min_points)};
  std::vector<std::vector<PartialScore>> parts(n);
  const auto membership = nn_membership_factory(config.pipeline.fusion.margin);
  PipelineConfig pipeline = config.pipeline;
  if (pipeline.tracker.gate.empty()) pipeline.tracker.gate = TrackerConfig::gates_from_cwm(out.cwm);
  parallel_for(n, config.jobs, [&](std::size_t i) {
    const auto seq = corpus_sequence(config.scene, config.seed, i, taxonomy);
    for (const auto& strategy : strategies) {
      DetectorConfig det;
      det.strategy = strategy;
      det.noise = config.noise;
      det.seed = sequence_seed(config.seed ^ 0xD5ULL, i);
      det.ground_z = config.scene.ground_z;
      PartialScore part(taxonomy);
      part.add(seq, run_synthetic_sequence(seq, taxonomy, spec, det, membership, pipeline));
      parts[i].push_back(std::move(part));
    }
  });
  for (std::size_t k = 0; k < std::size(strategies); ++k) {
    PartialScore total(taxonomy);
    for (std::size_t i = 0; i < n; ++i) total.merge(parts[i][k]);
    out.strategies.push_back({strategies[k].variant, total.report()});
  }
  out.seconds = seconds_since(t0);
  return out;
}

MembershipExperimentConfig::MembershipExperimentConfig() {
  scene.ambiguous = true;
  scene.tangential_groups = true;
  scene.group_scale_min = 0.6;
  scene.group_scale_max = 1.4;
  scene.group_gap_min = 0.1;
  scene.group_gap_max = 0.3;
  noise.center_jitter = 0.3;
  noise.extent_noise = 0.1;
  noise.centroid_noise = 0.075;
  pair_jitter = 0.3;
  // Wider than the library default: the noisy extents here under-cover more.
  fusion.margin = {0.2, 0.25};
  train.optimizer = OptimizerKind::adam;
  train.learning_rate = 1e-3;
  train.max_points_per_roi = 64;
  train.roi_margin = fusion.margin;
  train.balanced = true;
}

const MembershipVariantScore& MembershipExperimentResult::variant(FeatureSet f) const {
  for (const auto& v : variants) {
    if (v.features == f) return v;
  }
  throw Error(Errc::invalid_argument, std::string("no result for features ") + to_string(f));
}

void add_membership_scenes(MembershipPairBuilder& builder, const SyntheticSequence& seq,
                           const Taxonomy& taxonomy, const GridSpec& spec,
                           const DetectorConfig& detector, double pair_jitter,
                           std::uint64_t seed, const CwmStats* floor) {
  const auto trajectories = extract_trajectories(seq.sequence, taxonomy);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t s = 0; s < seq.sequence.sweeps.size(); ++s) {
    const auto& sweep = seq.sequence.sweeps[s];
    const auto maps = simulate_sweep(seq, s, trajectories, taxonomy, spec, detector);
    std::mt19937_64 rng(sequence_seed(seed, s));
    MembershipScene scene;
    scene.points = sweep.points;
    scene.sem_pred = maps.point_sem;
    scene.gt_inst = sweep.inst_labels;
    scene.provider = maps.features.get();
    for (const auto& t : trajectories) {
      const auto extents = aggregate_extent(t, ExtentStrategy::max());
      for (std::size_t r = 0; r < t.records.size(); ++r) {
        if (t.records[r].sweep_index != s) continue;
        Detection d;
        d.center = t.records[r].center;
        d.center.x() += pair_jitter * gauss(rng);
        d.center.y() += pair_jitter * gauss(rng);
        d.confidence = 1.0;
        d.class_id = t.class_id;
        d.extent = extents[r].extent;
        if (floor != nullptr) {
          if (auto it = floor->find(t.class_id); it != floor->end()) {
            d.extent = d.extent.cwiseMax(it->second);
          }
        }
        scene.centers.emplace_back(d, t.instance_id);
      }
    }
    builder.add(scene);
  }
}

ExtentLookup floored_extent_lookup(const PredictedMaps& maps, const CwmStats* floor) {
  return [&maps, floor](ClassId cls, int bx, int by) {
    const auto cell = maps.bev.cell(bx, by);
    Vec3 e(maps.extent[3 * cell], maps.extent[3 * cell + 1], maps.extent[3 * cell + 2]);
    if (floor != nullptr) {
      if (auto it = floor->find(cls); it != floor->end()) e = e.cwiseMax(it->second);
    }
    return e;
  };
}

MembershipExperimentResult run_membership_experiment(const MembershipExperimentConfig& config,
                                                     const Taxonomy& taxonomy,
                                                     const GridSpec& spec) {
  const auto t0 = std::chrono::steady_clock::now();
  MembershipExperimentResult out;
  DetectorConfig det;
  det.strategy = ExtentStrategy::max();
  det.noise = config.noise;
  det.ground_z = config.scene.ground_z;
  det.feature_downsample = config.feature_downsample;

  CwmStats class_means;
  if (config.class_mean_floor) {
    std::vector<InstanceTrajectory> all;
    for (int i = 0; i < config.train_sequences; ++i) {
      const auto seq = corpus_sequence(config.scene, config.seed, static_cast<std::size_t>(i),
                                       taxonomy);
      auto t = extract_trajectories(seq.sequence, taxonomy);
      all.insert(all.end(), t.begin(), t.end());
    }
    class_means = class_wise_mean_extents(all, taxonomy);
  }
  const CwmStats* floor = config.class_mean_floor ? &class_means : nullptr;

  std::vector<TrainedMembership> models;
  for (auto f : config.variants) {
    const auto tv = std::chrono::steady_clock::now();
    auto train = config.train;
    train.features = f;
    MembershipPairBuilder builder(taxonomy, train);
    for (int i = 0; i < config.train_sequences; ++i) {
      const auto seq = corpus_sequence(config.scene, config.seed, static_cast<std::size_t>(i),
                                       taxonomy);
      det.seed = sequence_seed(config.seed ^ 0xA1ULL, static_cast<std::size_t>(i));
      add_membership_scenes(builder, seq, taxonomy, spec, det, config.pair_jitter,
                            sequence_seed(config.seed ^ 0xB2ULL, static_cast<std::size_t>(i)),
                            floor);
    }
    const auto data = builder.build();
    models.push_back(train_membership_stage2(data, train));
    MembershipVariantScore v;
    v.features = f;
    v.loss_trace = models.back().result.loss_trace;
    v.pairs = static_cast<std::size_t>(data.labels.size());
    v.train_seconds = seconds_since(tv);
    out.variants.push_back(std::move(v));
  }

  const auto n = static_cast<std::size_t>(config.test_sequences);
  struct Counts {
    MembershipCount nn;
    std::vector<MembershipCount> variants;
  };
  std::vector<Counts> counts(n);
  parallel_for(n, config.jobs, [&](std::size_t i) {
    // Test sequences continue the corpus after the training ones.
    const std::size_t index = static_cast<std::size_t>(config.train_sequences) + i;
    const auto seq = corpus_sequence(config.scene, config.seed, index, taxonomy);
    const auto trajectories = extract_trajectories(seq.sequence, taxonomy);
    DetectorConfig d = det;
    d.seed = sequence_seed(config.seed ^ 0xA1ULL, index);
    auto& c = counts[i];
    c.variants.resize(models.size());
    auto add = [](MembershipCount& acc, const MembershipCount& m) {
      acc.correct += m.correct;
      acc.total += m.total;
    };
    for (std::size_t s = 0; s < seq.sequence.sweeps.size(); ++s) {
      const auto& sweep = seq.sequence.sweeps[s];
      const auto gt = labeling_of(sweep);
      const auto maps = simulate_sweep(seq, s, trajectories, taxonomy, spec, d);
      const auto dets =
          nms_detect(maps, spec, taxonomy, config.nms, floored_extent_lookup(maps, floor));
      const NnMembership nn(sweep.points, maps.point_sem, dets, config.fusion.margin);
      const auto fused_nn =
          fuse_panoptic(sweep.points, maps.point_sem, dets, nn, taxonomy, config.fusion);
      add(c.nn, membership_accuracy(sweep.points, gt, fused_nn.assigned, dets, taxonomy,
                                    config.fusion.margin));
      for (std::size_t m = 0; m < models.size(); ++m) {
        const MlpMembership mlp(models[m].model, models[m].features, sweep.points,
                                maps.point_sem, dets, *maps.features, taxonomy);
        const auto fused =
            fuse_panoptic(sweep.points, maps.point_sem, dets, mlp, taxonomy, config.fusion);
        add(c.variants[m], membership_accuracy(sweep.points, gt, fused.assigned, dets, taxonomy,
                                               config.fusion.margin));
      }
    }
  });
  for (const auto& c : counts) {
    out.nn.correct += c.nn.correct;
    out.nn.total += c.nn.total;
    for (std::size_t m = 0; m < models.size(); ++m) {
      out.variants[m].count.correct += c.variants[m].correct;
      out.variants[m].count.total += c.variants[m].total;
    }
  }
  out.seconds = seconds_since(t0);
  return out;
}

CorpusScore run_identity_experiment(const IdentityExperimentConfig& config,
                                    const Taxonomy& taxonomy, const GridSpec& spec) {
  const auto n = static_cast<std::size_t>(config.sequences);
  std::vector<std::optional<PartialScore>> parts(n);
  const auto membership = nn_membership_factory(config.pipeline.fusion.margin);
  parallel_for(n, config.jobs, [&](std::size_t i) {
    const auto seq = corpus_sequence(config.scene, config.seed, i, taxonomy);
    DetectorConfig det;
    det.strategy = ExtentStrategy::max();
    det.seed = sequence_seed(config.seed, i);
    det.ground_z = config.scene.ground_z;
    PipelineConfig pipeline = config.pipeline;
    if (pipeline.tracker.gate.empty()) {
      const auto trajs = extract_trajectories(seq.sequence, taxonomy);
      pipeline.tracker.gate =
          TrackerConfig::gates_from_cwm(class_wise_mean_extents(trajs, taxonomy));
    }
    parts[i].emplace(taxonomy);
    parts[i]->add(seq, run_synthetic_sequence(seq, taxonomy, spec, det, membership, pipeline));
  });
  PartialScore total(taxonomy);
  for (const auto& p : parts) total.merge(*p);
  return total.report();
}

}  // namespace modal
