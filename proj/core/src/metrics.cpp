#include "modal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <tuple>

namespace modal {

namespace {

using SegKey = std::pair<ClassId, InstanceId>;

void check_sizes(const PanopticLabeling& gt, const PanopticLabeling& pred) {
  if (gt.sem.size() != gt.inst.size() || pred.sem.size() != pred.inst.size() ||
      gt.size() != pred.size()) {
    throw Error(Errc::count_mismatch, "gt and prediction lengths differ");
  }
}

double safe_div(double a, double b) { return b > 0.0 ? a / b : 0.0; }

}  // namespace

PqAccumulator::PqAccumulator(const Taxonomy& taxonomy) : taxonomy_(taxonomy) {
  for (auto id : taxonomy.evaluated_ids()) {
    ClassPq c;
    c.class_id = id;
    c.thing = taxonomy.is_thing(id);
    classes_.push_back(c);
  }
}

void PqAccumulator::add(const PanopticLabeling& gt, const PanopticLabeling& pred) {
  check_sizes(gt, pred);
  const std::size_t n = gt.size();
  std::map<SegKey, long> gt_inst_size;
  for (std::size_t i = 0; i < n; ++i) {
    if (taxonomy_.is_thing(gt.sem[i]) && gt.inst[i] != kNoInstance) {
      ++gt_inst_size[{gt.sem[i], gt.inst[i]}];
    }
  }
  auto valid = [&](std::size_t i) {
    const ClassId c = gt.sem[i];
    if (taxonomy_.is_ignore(c)) return false;
    if (taxonomy_.is_thing(c)) {
      if (gt.inst[i] == kNoInstance) return false;
      return gt_inst_size[{c, gt.inst[i]}] >= taxonomy_.min_instance_points();
    }
    return true;
  };

  std::map<SegKey, long> gsize, psize;
  std::map<std::pair<SegKey, SegKey>, long> inter;
  for (std::size_t i = 0; i < n; ++i) {
    if (!valid(i)) continue;
    const ClassId gc = gt.sem[i];
    const ClassId pc = pred.sem[i];
    const int gi = taxonomy_.class_index(gc);
    ++classes_[static_cast<std::size_t>(gi)].sem_union;
    if (pc == gc) {
      ++classes_[static_cast<std::size_t>(gi)].sem_inter;
    } else {
      const int pi = taxonomy_.class_index(pc);
      if (pi >= 0) ++classes_[static_cast<std::size_t>(pi)].sem_union;
    }
    const SegKey g{gc, taxonomy_.is_thing(gc) ? gt.inst[i] : kNoInstance};
    ++gsize[g];
    std::optional<SegKey> p;
    if (taxonomy_.is_thing(pc) && pred.inst[i] != kNoInstance) {
      p = SegKey{pc, pred.inst[i]};
    } else if (taxonomy_.is_stuff(pc)) {
      p = SegKey{pc, kNoInstance};
    }
    if (!p) continue;
    ++psize[*p];
    if (p->first == g.first) ++inter[{g, *p}];
  }

  std::map<SegKey, bool> gmatched, pmatched;
  for (const auto& [pair, count] : inter) {
    const auto& [g, p] = pair;
    const double u = static_cast<double>(gsize[g] + psize[p] - count);
    const double iou = count / u;
    if (iou > 0.5) {
      auto& c = classes_[static_cast<std::size_t>(taxonomy_.class_index(g.first))];
      ++c.tp;
      c.iou_sum += iou;
      gmatched[g] = true;
      pmatched[p] = true;
    }
  }
  for (const auto& [g, s] : gsize) {
    if (!gmatched.count(g)) ++classes_[static_cast<std::size_t>(taxonomy_.class_index(g.first))].fn;
  }
  for (const auto& [p, s] : psize) {
    if (!pmatched.count(p)) ++classes_[static_cast<std::size_t>(taxonomy_.class_index(p.first))].fp;
  }
}

void PqAccumulator::merge(const PqAccumulator& other) {
  if (other.classes_.size() != classes_.size()) {
    throw Error(Errc::invalid_argument, "accumulators use different taxonomies");
  }
  for (std::size_t k = 0; k < classes_.size(); ++k) {
    auto& a = classes_[k];
    const auto& b = other.classes_[k];
    a.iou_sum += b.iou_sum;
    a.tp += b.tp;
    a.fp += b.fp;
    a.fn += b.fn;
    a.sem_inter += b.sem_inter;
    a.sem_union += b.sem_union;
  }
}

PqReport PqAccumulator::report() const {
  PqReport r;
  r.classes = classes_;
  double pq = 0, sq = 0, rq = 0, dag = 0, th = 0, st = 0, miou = 0;
  int n = 0, n_dag = 0, n_th = 0, n_st = 0, n_iou = 0;
  for (auto& c : r.classes) {
    const double denom = c.tp + 0.5 * c.fp + 0.5 * c.fn;
    c.pq = safe_div(c.iou_sum, denom);
    c.sq = safe_div(c.iou_sum, static_cast<double>(c.tp));
    c.rq = safe_div(static_cast<double>(c.tp), denom);
    c.iou = safe_div(static_cast<double>(c.sem_inter), static_cast<double>(c.sem_union));
    const bool seen = c.tp + c.fp + c.fn > 0;
    if (seen) {
      pq += c.pq;
      sq += c.sq;
      rq += c.rq;
      ++n;
      if (c.thing) {
        th += c.pq;
        ++n_th;
      } else {
        st += c.pq;
        ++n_st;
      }
    }
    if (c.sem_union > 0) {
      miou += c.iou;
      ++n_iou;
    }
    if (c.thing && seen) {
      dag += c.pq;
      ++n_dag;
    } else if (!c.thing && c.sem_union > 0) {
      dag += c.iou;
      ++n_dag;
    }
  }
  r.pq = safe_div(pq, n);
  r.sq = safe_div(sq, n);
  r.rq = safe_div(rq, n);
  r.pq_things = safe_div(th, n_th);
  r.pq_stuff = safe_div(st, n_st);
  r.pq_dagger = safe_div(dag, n_dag);
  r.miou = safe_div(miou, n_iou);
  return r;
}

PqReport compute_pq(const PanopticLabeling& gt, const PanopticLabeling& pred,
                    const Taxonomy& taxonomy) {
  PqAccumulator acc(taxonomy);
  acc.add(gt, pred);
  return acc.report();
}

MiouReport compute_miou(std::span<const ClassId> gt, std::span<const ClassId> pred,
                        const Taxonomy& taxonomy) {
  if (gt.size() != pred.size()) throw Error(Errc::count_mismatch, "label lengths differ");
  const auto& ids = taxonomy.evaluated_ids();
  std::vector<long> inter(ids.size(), 0), uni(ids.size(), 0);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const int g = taxonomy.class_index(gt[i]);
    if (g < 0) continue;
    ++uni[static_cast<std::size_t>(g)];
    if (pred[i] == gt[i]) {
      ++inter[static_cast<std::size_t>(g)];
    } else {
      const int p = taxonomy.class_index(pred[i]);
      if (p >= 0) ++uni[static_cast<std::size_t>(p)];
    }
  }
  MiouReport r;
  double sum = 0.0;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (uni[k] == 0) continue;
    const double iou = static_cast<double>(inter[k]) / static_cast<double>(uni[k]);
    r.per_class.push_back({ids[k], iou});
    sum += iou;
  }
  r.mean = safe_div(sum, static_cast<double>(r.per_class.size()));
  return r;
}

LstqAccumulator::LstqAccumulator(const Taxonomy& taxonomy)
    : taxonomy_(taxonomy),
      inter_(taxonomy.evaluated_ids().size(), 0),
      uni_(taxonomy.evaluated_ids().size(), 0) {}

void LstqAccumulator::add_sequence(std::span<const PanopticLabeling> gt,
                                   std::span<const PanopticLabeling> pred) {
  if (gt.size() != pred.size()) throw Error(Errc::count_mismatch, "sequence lengths differ");
  std::map<InstanceId, long> tsize, ssize;
  std::map<std::pair<InstanceId, InstanceId>, long> inter;
  for (std::size_t s = 0; s < gt.size(); ++s) {
    check_sizes(gt[s], pred[s]);
    const auto& g = gt[s];
    const auto& p = pred[s];
    for (std::size_t i = 0; i < g.size(); ++i) {
      const int gi = taxonomy_.class_index(g.sem[i]);
      if (gi < 0) continue;
      ++uni_[static_cast<std::size_t>(gi)];
      if (p.sem[i] == g.sem[i]) {
        ++inter_[static_cast<std::size_t>(gi)];
      } else {
        const int pi = taxonomy_.class_index(p.sem[i]);
        if (pi >= 0) ++uni_[static_cast<std::size_t>(pi)];
      }
      const bool gt_tube = taxonomy_.is_thing(g.sem[i]) && g.inst[i] != kNoInstance;
      if (gt_tube) ++tsize[g.inst[i]];
      if (p.inst[i] != kNoInstance) {
        ++ssize[p.inst[i]];
        if (gt_tube) ++inter[{g.inst[i], p.inst[i]}];
      }
    }
  }
  std::map<InstanceId, double> score;
  for (const auto& [key, count] : inter) {
    const auto& [t, s] = key;
    const double iou = static_cast<double>(count) / static_cast<double>(tsize[t] + ssize[s] - count);
    score[t] += count * iou;
  }
  for (const auto& [t, size] : tsize) {
    assoc_sum_ += score[t] / static_cast<double>(size);
    ++tubes_;
  }
}

void LstqAccumulator::merge(const LstqAccumulator& other) {
  if (other.uni_.size() != uni_.size()) {
    throw Error(Errc::invalid_argument, "accumulators use different taxonomies");
  }
  assoc_sum_ += other.assoc_sum_;
  tubes_ += other.tubes_;
  for (std::size_t k = 0; k < uni_.size(); ++k) {
    inter_[k] += other.inter_[k];
    uni_[k] += other.uni_[k];
  }
}

LstqReport LstqAccumulator::report() const {
  LstqReport r;
  r.s_assoc = safe_div(assoc_sum_, static_cast<double>(tubes_));
  double sum = 0.0;
  int n = 0;
  for (std::size_t k = 0; k < uni_.size(); ++k) {
    if (uni_[k] == 0) continue;
    sum += static_cast<double>(inter_[k]) / static_cast<double>(uni_[k]);
    ++n;
  }
  r.s_cls = safe_div(sum, n);
  r.lstq = std::sqrt(r.s_assoc * r.s_cls);
  return r;
}

LstqReport compute_lstq(std::span<const PanopticLabeling> gt,
                        std::span<const PanopticLabeling> pred, const Taxonomy& taxonomy) {
  LstqAccumulator acc(taxonomy);
  acc.add_sequence(gt, pred);
  return acc.report();
}

std::vector<int> match_instances_to_detections(std::span<const InstanceId> gt_ids,
                                               std::span<const ClassId> gt_classes,
                                               std::span<const Vec3> gt_centers,
                                               std::span<const Detection> detections,
                                               double gate) {
  if (gt_classes.size() != gt_ids.size() || gt_centers.size() != gt_ids.size()) {
    throw Error(Errc::count_mismatch, "instance arrays differ in length");
  }
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t g = 0; g < gt_ids.size(); ++g) {
    for (std::size_t d = 0; d < detections.size(); ++d) {
      if (detections[d].class_id != gt_classes[g]) continue;
      const double dist = (detections[d].center - gt_centers[g]).norm();
      if (dist < gate) pairs.emplace_back(dist, g, d);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  std::vector<int> out(gt_ids.size(), -1);
  std::vector<bool> used(detections.size(), false);
  for (const auto& [dist, g, d] : pairs) {
    if (out[g] >= 0 || used[d]) continue;
    out[g] = static_cast<int>(d);
    used[d] = true;
  }
  return out;
}

MembershipCount membership_accuracy(std::span<const Point> points, const PanopticLabeling& gt,
                                    std::span<const int> assigned,
                                    std::span<const Detection> detections,
                                    const Taxonomy& taxonomy, const RoiMargin& margin,
                                    double gate) {
  if (gt.size() != points.size() || assigned.size() != points.size()) {
    throw Error(Errc::count_mismatch, "membership inputs differ in length");
  }
  std::map<InstanceId, std::pair<ClassId, std::pair<Vec3, long>>> inst;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!taxonomy.is_thing(gt.sem[i]) || gt.inst[i] == kNoInstance) continue;
    auto& e = inst.try_emplace(gt.inst[i], gt.sem[i], std::make_pair(Vec3::Zero().eval(), 0L))
                  .first->second;
    e.second.first += points[i].xyz();
    ++e.second.second;
  }
  std::vector<InstanceId> ids;
  std::vector<ClassId> classes;
  std::vector<Vec3> centers;
  for (const auto& [id, e] : inst) {
    ids.push_back(id);
    classes.push_back(e.first);
    centers.push_back(e.second.first / static_cast<double>(e.second.second));
  }
  const auto match = match_instances_to_detections(ids, classes, centers, detections, gate);
  std::map<InstanceId, int> match_of;
  for (std::size_t g = 0; g < ids.size(); ++g) match_of[ids[g]] = match[g];

  MembershipCount out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!taxonomy.is_thing(gt.sem[i]) || gt.inst[i] == kNoInstance) continue;
    bool inside = false;
    for (const auto& d : detections) {
      if (in_roi(d, points[i], margin)) {
        inside = true;
        break;
      }
    }
    if (!inside) continue;
    ++out.total;
    const int m = match_of[gt.inst[i]];
    if (m >= 0 && assigned[i] == m) ++out.correct;
  }
  return out;
}

void write_pq_csv(std::ostream& out, const PqReport& report, const Taxonomy& taxonomy) {
  const auto old = out.precision(10);
  out << "class,pq,sq,rq,iou,tp,fp,fn\n";
  for (const auto& c : report.classes) {
    if (c.tp + c.fp + c.fn == 0 && c.sem_union == 0) continue;
    const auto* info = taxonomy.find(c.class_id);
    out << (info ? info->name : std::to_string(c.class_id)) << ',' << c.pq << ',' << c.sq << ','
        << c.rq << ',' << c.iou << ',' << c.tp << ',' << c.fp << ',' << c.fn << '\n';
  }
  out << "all," << report.pq << ',' << report.sq << ',' << report.rq << ',' << report.miou
      << ",,,\n";
  out << "things," << report.pq_things << ",,,,,,\n";
  out << "stuff," << report.pq_stuff << ",,,,,,\n";
  out << "pq_dagger," << report.pq_dagger << ",,,,,,\n";
  out.precision(old);
}

}  // namespace modal
