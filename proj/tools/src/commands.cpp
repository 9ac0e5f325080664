#include "commands.hpp"

#include <cstdio>
#include <cstring>
#include <optional>
#include <ostream>
#include <sstream>

namespace modal::cli {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::vector<std::string> sequence_names(std::size_t n) {
  const int width = n > 100 ? static_cast<int>(std::to_string(n - 1).size()) : 2;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%0*zu", width, i);
    out.emplace_back(buf);
  }
  return out;
}

SyntheticSequence load_synthetic(const DatasetLayout& layout, const std::string& name,
                                 const Taxonomy& taxonomy) {
  SyntheticSequence s;
  s.sequence = read_sequence(layout, name, true);
  s.sequence.validate(taxonomy);
  if (fs::exists(layout.registry(name))) s.registry = read_registry(layout.registry(name));
  return s;
}

std::vector<std::vector<InstanceTrajectory>> dataset_trajectories(
    const DatasetLayout& layout, const std::vector<std::string>& names, const Taxonomy& taxonomy,
    int jobs) {
  std::vector<std::vector<InstanceTrajectory>> out(names.size());
  parallel_for(names.size(), jobs, [&](std::size_t i) {
    const auto seq = read_sequence(layout, names[i], true);
    seq.validate(taxonomy);
    out[i] = extract_trajectories(seq, taxonomy);
  });
  return out;
}

CwmStats pooled_cwm(const std::vector<std::vector<InstanceTrajectory>>& trajs,
                    const Taxonomy& taxonomy) {
  std::vector<InstanceTrajectory> all;
  for (const auto& t : trajs) all.insert(all.end(), t.begin(), t.end());
  return class_wise_mean_extents(all, taxonomy);
}

std::string cwm_text(const CwmStats& cwm) {
  std::ostringstream ss;
  write_cwm(ss, cwm);
  return ss.str();
}

std::vector<std::string> require_sequences(const DatasetLayout& layout) {
  auto names = layout.sequences();
  if (names.empty()) throw Error(Errc::missing_input, "no sequences under " + layout.root.string());
  return names;
}

}  // namespace

int cmd_synth(const Settings& s, int jobs, const std::string& out_dir, std::ostream& out) {
  const auto taxonomy = synthetic_taxonomy();
  const auto scene = s.scene();
  const auto n = static_cast<std::size_t>(s.sequences());
  const auto names = sequence_names(n);
  const DatasetLayout layout{out_dir};
  fs::create_directories(layout.root);
  parallel_for(n, jobs, [&](std::size_t i) {
    const auto seq = corpus_sequence(scene, s.seed(), i, taxonomy);
    seq.sequence.validate(taxonomy);
    write_sequence(layout, names[i], seq.sequence);
    write_registry(layout.registry(names[i]), seq.registry);
  });
  save_taxonomy(layout.taxonomy(), taxonomy);
  write_text(layout.root / "run.cfg", s.text());
  out << "synth: " << n << " sequences x " << scene.sweep_count << " sweeps -> " << out_dir
      << '\n';
  return 0;
}

int cmd_targets(const Settings& s, int jobs, const std::string& data, const std::string& out_dir,
                bool dense, std::ostream& out) {
  const DatasetLayout layout{data};
  const auto taxonomy = load_taxonomy(layout.taxonomy());
  const auto names = require_sequences(layout);
  const auto spec = s.grid();
  const auto trajs = dataset_trajectories(layout, names, taxonomy, jobs);
  const auto cwm = pooled_cwm(trajs, taxonomy);
  const auto strategy = s.strategy(cwm);
  const auto margin = s.margin();
  const HeatmapConfig heat;
  const fs::path root(out_dir);
  fs::create_directories(root);

  std::vector<long> excluded(names.size(), 0), replaced(names.size(), 0);
  parallel_for(names.size(), jobs, [&](std::size_t i) {
    const auto seq = read_sequence(layout, names[i], true);
    const auto& trajectories = trajs[i];
    std::vector<std::vector<TrainingExtent>> extents;
    for (const auto& t : trajectories) extents.push_back(aggregate_extent(t, strategy));

    std::ostringstream tsv;
    tsv << "sweep\tinstance\tclass\tcx\tcy\tcz\tex\tey\tez\texcluded\treplaced\tbx\tby\tpeak"
           "\tsigma\theight\tvx\tvy\troi_points\tmembers\n";
    for (std::size_t sw = 0; sw < seq.sweeps.size(); ++sw) {
      const auto& sweep = seq.sweeps[sw];
      struct Row {
        const InstanceTrajectory* traj;
        std::size_t record;
        const TrainingExtent* extent;
      };
      std::vector<Row> rows;
      std::vector<BevInstance> insts;
      for (std::size_t t = 0; t < trajectories.size(); ++t) {
        const auto& traj = trajectories[t];
        for (std::size_t r = 0; r < traj.records.size(); ++r) {
          if (traj.records[r].sweep_index != sw) continue;
          rows.push_back({&traj, r, &extents[t][r]});
          if (extents[t][r].excluded) {
            ++excluded[i];
            continue;
          }
          if (extents[t][r].replaced) ++replaced[i];
          BevInstance b;
          b.center = traj.records[r].center;
          b.extent = extents[t][r].extent;
          b.class_id = traj.class_id;
          b.velocity = velocity_target(traj, r, seq.period);
          insts.push_back(b);
        }
      }
      const auto bev = render_bev_targets(insts, spec, taxonomy, heat);
      for (const auto& row : rows) {
        const auto& rec = row.traj->records[row.record];
        const Vec3 e = row.extent->extent;
        int bx = -1, by = -1;
        double peak = 0.0, sigma = 0.0, height = 0.0;
        Vec2 vel = Vec2::Zero();
        if (!row.extent->excluded && spec.bev_cell_of(rec.center.x(), rec.center.y(), bx, by)) {
          const auto cell = bev.cell(bx, by);
          peak = bev.heat(taxonomy.thing_index(rec.class_id), bx, by);
          sigma = heatmap_sigma(e, spec, heat);
          height = bev.height[cell];
          vel = Vec2(bev.velocity[2 * cell], bev.velocity[2 * cell + 1]);
        }
        Detection det;
        det.center = rec.center;
        det.extent = e;
        det.class_id = rec.class_id;
        const auto roi = roi_points(det, sweep.points, margin);
        std::vector<std::uint32_t> own;
        for (std::size_t p = 0; p < sweep.size(); ++p) {
          if (sweep.inst_labels[p] == rec.instance_id) own.push_back(static_cast<std::uint32_t>(p));
        }
        long members = 0;
        for (auto m : membership_target(own, roi)) members += m;
        tsv << sw << '\t' << rec.instance_id << '\t' << rec.class_id << '\t' << num(rec.center.x())
            << '\t' << num(rec.center.y()) << '\t' << num(rec.center.z()) << '\t' << num(e.x())
            << '\t' << num(e.y()) << '\t' << num(e.z()) << '\t' << row.extent->excluded << '\t'
            << row.extent->replaced << '\t' << bx << '\t' << by << '\t' << num(peak) << '\t'
            << num(sigma) << '\t' << num(height) << '\t' << num(vel.x()) << '\t' << num(vel.y())
            << '\t' << roi.size() << '\t' << members << '\n';
      }
      if (dense) {
        std::string bytes(bev.heatmap.size() * sizeof(float), '\0');
        for (std::size_t k = 0; k < bev.heatmap.size(); ++k) {
          const auto f = static_cast<float>(bev.heatmap[k]);
          std::memcpy(bytes.data() + k * sizeof(float), &f, sizeof(float));
        }
        write_text(root / names[i] / (frame_name(sw) + ".heat"), bytes);
      }
    }
    write_text(root / names[i] / "targets.tsv", tsv.str());
  });
  write_text(root / "cwm.tsv", cwm_text(cwm));
  write_text(root / "run.cfg", s.text());
  long ex = 0, rep = 0;
  for (std::size_t i = 0; i < names.size(); ++i) {
    ex += excluded[i];
    rep += replaced[i];
  }
  out << "targets: " << names.size() << " sequences, strategy " << to_string(strategy.variant)
      << ", " << ex << " excluded, " << rep << " replaced -> " << out_dir << '\n';
  return 0;
}

int cmd_train_mem(const Settings& s, const std::string& data, const std::string& out_dir,
                  std::ostream& out) {
  const DatasetLayout layout{data};
  const auto taxonomy = load_taxonomy(layout.taxonomy());
  const auto names = require_sequences(layout);
  const auto spec = s.grid();
  auto det = s.detector();
  const auto train = s.train();
  const auto cwm = pooled_cwm(dataset_trajectories(layout, names, taxonomy, 1), taxonomy);
  const CwmStats* floor = s.class_mean_floor() ? &cwm : nullptr;

  MembershipPairBuilder builder(taxonomy, train);
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto seq = load_synthetic(layout, names[i], taxonomy);
    det.seed = sequence_seed(s.seed() ^ 0xA1ULL, i);
    add_membership_scenes(builder, seq, taxonomy, spec, det, s.pair_jitter(),
                          sequence_seed(s.seed() ^ 0xB2ULL, i), floor);
  }
  const auto pairs = builder.build();
  if (pairs.labels.size() == 0) throw Error(Errc::empty_input, "no training pairs in " + data);
  const auto trained = train_membership_stage2(pairs, train);

  const fs::path root(out_dir);
  fs::create_directories(root);
  std::ostringstream ckpt;
  write_checkpoint(ckpt, trained.model);
  write_text(root / "model.ckpt", ckpt.str());
  std::string loss = "epoch,loss\n";
  for (std::size_t e = 0; e < trained.result.loss_trace.size(); ++e) {
    loss += std::to_string(e + 1) + ',' + num(trained.result.loss_trace[e]) + '\n';
  }
  write_text(root / "loss.csv", loss);
  write_text(root / "cwm.tsv", cwm_text(cwm));
  write_text(root / "model.cfg", std::string("features = ") + to_string(trained.features) +
                                     "\nfeature_downsample = " +
                                     std::to_string(det.feature_downsample) + '\n');
  write_text(root / "run.cfg", s.text());
  const auto& trace = trained.result.loss_trace;
  out << "train-mem: " << pairs.labels.size() << " pairs, features " << to_string(trained.features)
      << ", loss " << num(trace.empty() ? 0.0 : trace.front()) << " -> "
      << num(trace.empty() ? 0.0 : trace.back()) << " -> " << out_dir << '\n';
  return 0;
}

int cmd_infer(const Settings& s, int jobs, const std::string& data, const std::string& out_dir,
              bool temporal, std::ostream& out) {
  const DatasetLayout layout{data};
  const auto taxonomy = load_taxonomy(layout.taxonomy());
  const auto names = require_sequences(layout);
  const auto spec = s.grid();
  const auto trajs = dataset_trajectories(layout, names, taxonomy, jobs);
  const auto cwm = pooled_cwm(trajs, taxonomy);
  auto det = s.detector();
  det.strategy = s.strategy(cwm);
  auto pipeline = s.pipeline();
  if (s.cwm_gates()) pipeline.tracker.gate = TrackerConfig::gates_from_cwm(cwm);

  std::optional<TrainedMembership> model;
  CwmStats floor_stats = cwm;
  if (s.membership() != "nn") {
    const fs::path dir(s.membership());
    if (!fs::is_directory(dir)) throw Error(Errc::missing_input, "no model directory " + dir.string());
    model.emplace();
    std::istringstream ckpt(read_text(dir / "model.ckpt"));
    model->model = read_checkpoint(ckpt);
    const auto meta = RunConfig::load(dir / "model.cfg");
    model->features = parse_feature_set(meta.get("features", "full"));
    det.feature_downsample = static_cast<int>(meta.get_int("feature_downsample", 1));
    std::istringstream floor_in(read_text(dir / "cwm.tsv"));
    floor_stats = read_cwm(floor_in);
  }
  const CwmStats* floor = s.class_mean_floor() ? &floor_stats : nullptr;
  const auto factory = model ? mlp_membership_factory(*model, taxonomy)
                             : nn_membership_factory(pipeline.fusion.margin);

  const DatasetLayout pred{out_dir};
  std::vector<MembershipCount> counts(names.size());
  parallel_for(names.size(), jobs, [&](std::size_t i) {
    const auto seq = load_synthetic(layout, names[i], taxonomy);
    DetectorConfig d = det;
    d.seed = sequence_seed(s.seed() ^ 0xD5ULL, i);
    Tracker tracker(pipeline.tracker);
    std::vector<PanopticLabeling> labels;
    std::ostringstream tsv;
    tsv << "sweep\tdetection\tclass\tconfidence\tcx\tcy\tcz\tex\tey\tez\n";
    for (std::size_t sw = 0; sw < seq.sequence.sweeps.size(); ++sw) {
      const auto& sweep = seq.sequence.sweeps[sw];
      const auto maps = simulate_sweep(seq, sw, trajs[i], taxonomy, spec, d);
      const SweepInput in{sweep.points, &maps};
      const auto lookup = floored_extent_lookup(maps, floor);
      TrackedSweep t;
      if (temporal) {
        t = track_sweep(tracker, sw, in, seq.sequence.period, spec, taxonomy, factory, pipeline,
                        lookup);
      } else {
        t.detections = nms_detect(maps, spec, taxonomy, pipeline.nms, lookup);
        const auto mem = factory(in, t.detections);
        auto fused = fuse_panoptic(sweep.points, maps.point_sem, t.detections, *mem, taxonomy,
                                   pipeline.fusion);
        t.labeling = std::move(fused.labeling);
        t.assigned = std::move(fused.assigned);
      }
      const auto mc = membership_accuracy(sweep.points, labeling_of(sweep), t.assigned,
                                          t.detections, taxonomy, pipeline.fusion.margin);
      counts[i].correct += mc.correct;
      counts[i].total += mc.total;
      for (std::size_t k = 0; k < t.detections.size(); ++k) {
        const auto& dt = t.detections[k];
        tsv << sw << '\t' << k << '\t' << dt.class_id << '\t' << num(dt.confidence) << '\t'
            << num(dt.center.x()) << '\t' << num(dt.center.y()) << '\t' << num(dt.center.z())
            << '\t' << num(dt.extent.x()) << '\t' << num(dt.extent.y()) << '\t'
            << num(dt.extent.z()) << '\n';
      }
      labels.push_back(std::move(t.labeling));
    }
    write_prediction(pred, names[i], labels);
    write_text(pred.sequence_dir(names[i]) / "detections.tsv", tsv.str());
  });

  MembershipCount total;
  std::string csv = "sequence,correct,total,accuracy\n";
  for (std::size_t i = 0; i < names.size(); ++i) {
    total.correct += counts[i].correct;
    total.total += counts[i].total;
    csv += names[i] + ',' + std::to_string(counts[i].correct) + ',' +
           std::to_string(counts[i].total) + ',' + num(counts[i].accuracy()) + '\n';
  }
  csv += "all," + std::to_string(total.correct) + ',' + std::to_string(total.total) + ',' +
         num(total.accuracy()) + '\n';
  write_text(pred.root / "membership.csv", csv);
  save_taxonomy(pred.taxonomy(), taxonomy);
  write_text(pred.root / "run.cfg", s.text());
  out << (temporal ? "track: " : "infer: ") << names.size() << " sequences, membership "
      << (model ? to_string(model->features) : "nn") << ", accuracy " << num(total.accuracy())
      << " -> " << out_dir << '\n';
  return 0;
}

int cmd_eval(int jobs, const std::string& gt, const std::string& pred, const std::string& out_dir,
             std::ostream& out) {
  const DatasetLayout gl{gt};
  const DatasetLayout pl{pred};
  const auto taxonomy = load_taxonomy(gl.taxonomy());
  const auto names = require_sequences(gl);
  std::vector<std::optional<PqAccumulator>> pq(names.size());
  std::vector<std::optional<LstqAccumulator>> lstq(names.size());
  parallel_for(names.size(), jobs, [&](std::size_t i) {
    const auto seq = read_sequence(gl, names[i], true);
    const auto p = read_prediction(pl, names[i]);
    if (p.size() != seq.sweeps.size()) {
      throw Error(Errc::count_mismatch, names[i] + ": " + std::to_string(p.size()) +
                                            " predicted sweeps for " +
                                            std::to_string(seq.sweeps.size()));
    }
    std::vector<PanopticLabeling> g;
    pq[i].emplace(taxonomy);
    for (std::size_t k = 0; k < p.size(); ++k) {
      g.push_back(labeling_of(seq.sweeps[k]));
      p[k].validate(taxonomy);
      pq[i]->add(g.back(), p[k]);
    }
    lstq[i].emplace(taxonomy);
    lstq[i]->add_sequence(g, p);
  });
  PqAccumulator pq_all(taxonomy);
  LstqAccumulator lstq_all(taxonomy);
  for (std::size_t i = 0; i < names.size(); ++i) {
    pq_all.merge(*pq[i]);
    lstq_all.merge(*lstq[i]);
  }
  const auto pr = pq_all.report();
  const auto lr = lstq_all.report();

  const fs::path root(out_dir);
  std::ostringstream pq_csv;
  write_pq_csv(pq_csv, pr, taxonomy);
  write_text(root / "pq.csv", pq_csv.str());
  write_text(root / "lstq.csv",
             "s_assoc,s_cls,lstq\n" + num(lr.s_assoc) + ',' + num(lr.s_cls) + ',' + num(lr.lstq) + '\n');

  std::string summary = "metric,value\n";
  auto row = [&](const char* k, double v) { summary += std::string(k) + ',' + num(v) + '\n'; };
  row("pq", pr.pq);
  row("sq", pr.sq);
  row("rq", pr.rq);
  row("pq_things", pr.pq_things);
  row("pq_stuff", pr.pq_stuff);
  row("pq_dagger", pr.pq_dagger);
  row("miou", pr.miou);
  row("s_assoc", lr.s_assoc);
  row("s_cls", lr.s_cls);
  row("lstq", lr.lstq);
  if (fs::exists(pl.root / "membership.csv")) {
    std::istringstream in(read_text(pl.root / "membership.csv"));
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind("all,", 0) == 0) summary += "membership_accuracy," + line.substr(line.rfind(',') + 1) + '\n';
    }
  }
  write_text(root / "summary.csv", summary);
  out << pq_csv.str() << "s_assoc " << num(lr.s_assoc) << ", s_cls " << num(lr.s_cls) << ", lstq "
      << num(lr.lstq) << '\n';
  return 0;
}

}  // namespace modal::cli
