#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "modal/inference.hpp"
#include "modal/membership.hpp"
#include "modal/metrics.hpp"
#include "modal/synth.hpp"
#include "modal/targets.hpp"

namespace modal {

/// Coarser grid used by the desk-scale experiments: 0.16 m BEV cells over
/// +-40 m, no BEV downsampling.
GridSpec experiment_grid();

/// Runs fn(0..n-1) on up to `jobs` threads. Exceptions are rethrown in index
/// order after all workers finish.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

/// Seed of sequence `index` in a corpus.
std::uint64_t sequence_seed(std::uint64_t corpus_seed, std::size_t index);

SyntheticSequence corpus_sequence(const SceneConfig& base, std::uint64_t corpus_seed,
                                  std::size_t index, const Taxonomy& taxonomy);

MembershipFactory nn_membership_factory(const RoiMargin& margin);
MembershipFactory mlp_membership_factory(const TrainedMembership& model,
                                         const Taxonomy& taxonomy);

struct SequenceScore {
  std::vector<PanopticLabeling> labelings;
  std::vector<std::vector<Detection>> detections;
  MembershipCount membership;
};

/// Simulated detector -> nms -> fusion -> tracking over one synthetic sequence.
SequenceScore run_synthetic_sequence(const SyntheticSequence& seq, const Taxonomy& taxonomy,
                                     const GridSpec& spec, const DetectorConfig& detector,
                                     const MembershipFactory& membership,
                                     const PipelineConfig& pipeline);

struct CorpusScore {
  PqReport pq;
  LstqReport lstq;
  MembershipCount membership;
};

/// Largest componentwise relative error |e_a - h_a| / h_a.
double relative_extent_error(const Vec3& estimate, const Vec3& truth);

struct ExtentExperimentConfig {
  int sequences = 50;
  std::uint64_t seed = 1;
  SceneConfig scene;
  DetectorNoise noise;
  int dsb_min_points = 300;
  PipelineConfig pipeline;
  int jobs = 1;

  ExtentExperimentConfig();
};

struct StrategyScore {
  ExtentVariant variant = ExtentVariant::max;
  CorpusScore score;
};

struct ExtentErrorSummary {
  /// Median MAX error over trajectories that showed an x face and a y face.
  double max_median = 0.0;
  std::size_t max_samples = 0;
  /// Median per-sweep SW error over sweeps where a single face was visible.
  double sw_median = 0.0;
  std::size_t sw_samples = 0;
};

struct ExtentExperimentResult {
  std::vector<StrategyScore> strategies;  // sw, max, cwm, dsb
  ExtentErrorSummary error;
  CwmStats cwm;
  double seconds = 0.0;

  const CorpusScore& score(ExtentVariant v) const;
};

ExtentExperimentResult run_extent_experiment(const ExtentExperimentConfig& config,
                                             const Taxonomy& taxonomy, const GridSpec& spec);

struct MembershipExperimentConfig {
  int train_sequences = 30;
  int test_sequences = 20;
  std::uint64_t seed = 2;
  SceneConfig scene;
  DetectorNoise noise;
  MembershipTrainConfig train;
  /// Sigma of the jitter applied to GT centres when sampling training pairs.
  double pair_jitter = 0.2;
  FusionConfig fusion;
  NmsConfig nms;
  /// RoI extents never fall below the class-wise mean extent of the
  /// training sequences.
  bool class_mean_floor = true;
  /// Feature maps are pooled over this many heatmap cells per side.
  int feature_downsample = 4;
  std::vector<FeatureSet> variants{FeatureSet::geometry, FeatureSet::geometry_bev,
                                   FeatureSet::full};
  int jobs = 1;

  MembershipExperimentConfig();
};

struct MembershipVariantScore {
  FeatureSet features = FeatureSet::full;
  MembershipCount count;
  std::vector<double> loss_trace;
  std::size_t pairs = 0;
  double train_seconds = 0.0;
};

struct MembershipExperimentResult {
  MembershipCount nn;
  std::vector<MembershipVariantScore> variants;
  double seconds = 0.0;

  const MembershipVariantScore& variant(FeatureSet f) const;
};

/// Training scenes for one sequence: GT modal centres with jitter stand in
/// for detections, RoIs use the MAX extent, floored by `floor` when given.
void add_membership_scenes(MembershipPairBuilder& builder, const SyntheticSequence& seq,
                           const Taxonomy& taxonomy, const GridSpec& spec,
                           const DetectorConfig& detector, double pair_jitter,
                           std::uint64_t seed, const CwmStats* floor = nullptr);

/// Extent lookup reading the predicted extent map, optionally floored by the
/// class means.
ExtentLookup floored_extent_lookup(const PredictedMaps& maps, const CwmStats* floor);

MembershipExperimentResult run_membership_experiment(const MembershipExperimentConfig& config,
                                                     const Taxonomy& taxonomy,
                                                     const GridSpec& spec);

struct IdentityExperimentConfig {
  int sequences = 5;
  std::uint64_t seed = 3;
  SceneConfig scene;
  PipelineConfig pipeline;
  int jobs = 1;
};

/// Zero detector noise, MAX extents, nearest-neighbour membership.
CorpusScore run_identity_experiment(const IdentityExperimentConfig& config,
                                    const Taxonomy& taxonomy, const GridSpec& spec);

}  // namespace modal
