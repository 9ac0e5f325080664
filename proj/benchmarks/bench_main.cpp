#include <benchmark/benchmark.h>

#include "modal/inference.hpp"
#include "modal/metrics.hpp"
#include "modal/pipeline.hpp"
#include "modal/synth.hpp"

namespace {

using namespace modal;

const SyntheticSequence& scene() {
  static const SyntheticSequence seq = [] {
    SceneConfig cfg;
    cfg.seed = 11;
    cfg.sweep_count = 2;
    return generate_sequence(cfg, synthetic_taxonomy());
  }();
  return seq;
}

void BM_Voxelize(benchmark::State& state) {
  const auto& sweep = scene().sequence.sweeps[0];
  GridSpec spec;
  for (auto _ : state) benchmark::DoNotOptimize(voxelize(sweep.points, spec));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(sweep.size()));
}
BENCHMARK(BM_Voxelize);

void BM_RenderTargets(benchmark::State& state) {
  const auto tax = synthetic_taxonomy();
  const auto spec = experiment_grid();
  std::vector<BevInstance> insts;
  for (const auto& m : modal_instances(scene().sequence.sweeps[0], tax)) {
    insts.push_back({m.center, m.extent, m.class_id, Vec2::Zero(), 1.0});
  }
  for (auto _ : state) benchmark::DoNotOptimize(render_bev_targets(insts, spec, tax));
}
BENCHMARK(BM_RenderTargets);

void BM_DetectAndFuse(benchmark::State& state) {
  const auto tax = synthetic_taxonomy();
  const auto spec = experiment_grid();
  DetectorConfig det;
  const auto maps = simulate_detector(scene(), tax, spec, det);
  const auto& sweep = scene().sequence.sweeps[0];
  for (auto _ : state) {
    const auto dets = nms_detect(maps[0], spec, tax);
    const NnMembership nn(sweep.points, maps[0].point_sem, dets);
    benchmark::DoNotOptimize(fuse_panoptic(sweep.points, maps[0].point_sem, dets, nn, tax));
  }
}
BENCHMARK(BM_DetectAndFuse);

void BM_Pq(benchmark::State& state) {
  const auto tax = synthetic_taxonomy();
  const auto gt = labeling_of(scene().sequence.sweeps[0]);
  for (auto _ : state) benchmark::DoNotOptimize(compute_pq(gt, gt, tax));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(gt.size()));
}
BENCHMARK(BM_Pq);

}  // namespace
BENCHMARK_MAIN();
