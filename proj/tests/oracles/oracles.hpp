#pragma once

// Straight-line reference implementations. They share no code with the
// library beyond its plain data types, and favour obviousness over speed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include "modal/core_types.hpp"
#include "modal/membership.hpp"

namespace oracle {

using modal::ClassId;
using modal::InstanceId;
using modal::PanopticLabeling;
using modal::Taxonomy;

// ---------------------------------------------------------------- PQ

struct ClassCounts {
  long tp = 0, fp = 0, fn = 0;
  double iou_sum = 0.0;
};

struct PqResult {
  std::map<ClassId, ClassCounts> classes;
  double pq = 0.0;
};

/// Exhaustive segment-pair matcher for one sweep.
inline PqResult brute_force_pq(const PanopticLabeling& gt, const PanopticLabeling& pred,
                               const Taxonomy& tax) {
  const std::size_t n = gt.sem.size();
  auto thing = [&](ClassId c) {
    for (const auto& ci : tax.classes()) {
      if (ci.id == c) return ci.kind == modal::ClassKind::thing;
    }
    return false;
  };
  auto stuff = [&](ClassId c) {
    for (const auto& ci : tax.classes()) {
      if (ci.id == c) return ci.kind == modal::ClassKind::stuff;
    }
    return false;
  };

  // Which points take part at all.
  std::vector<bool> keep(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const ClassId c = gt.sem[i];
    if (stuff(c)) {
      keep[i] = true;
    } else if (thing(c) && gt.inst[i] != 0) {
      long size = 0;
      for (std::size_t j = 0; j < n; ++j) size += gt.sem[j] == c && gt.inst[j] == gt.inst[i];
      keep[i] = size >= tax.min_instance_points();
    }
  }

  // Segments as explicit point sets.
  using Key = std::pair<ClassId, InstanceId>;
  std::map<Key, std::set<std::size_t>> gseg, pseg;
  for (std::size_t i = 0; i < n; ++i) {
    if (!keep[i]) continue;
    gseg[{gt.sem[i], thing(gt.sem[i]) ? gt.inst[i] : 0}].insert(i);
    const ClassId pc = pred.sem[i];
    if (thing(pc) && pred.inst[i] != 0) pseg[{pc, pred.inst[i]}].insert(i);
    if (stuff(pc)) pseg[{pc, 0}].insert(i);
  }

  PqResult r;
  std::set<Key> gm, pm;
  for (const auto& [g, gs] : gseg) {
    for (const auto& [p, ps] : pseg) {
      if (g.first != p.first) continue;
      std::vector<std::size_t> both;
      std::set_intersection(gs.begin(), gs.end(), ps.begin(), ps.end(), std::back_inserter(both));
      std::set<std::size_t> uni(gs);
      uni.insert(ps.begin(), ps.end());
      const double iou = static_cast<double>(both.size()) / static_cast<double>(uni.size());
      if (iou > 0.5) {
        r.classes[g.first].tp += 1;
        r.classes[g.first].iou_sum += iou;
        gm.insert(g);
        pm.insert(p);
      }
    }
  }
  for (const auto& [g, gs] : gseg) {
    if (!gm.count(g)) r.classes[g.first].fn += 1;
  }
  for (const auto& [p, ps] : pseg) {
    if (!pm.count(p)) r.classes[p.first].fp += 1;
  }
  double sum = 0.0;
  int count = 0;
  for (const auto& [c, k] : r.classes) {
    if (k.tp + k.fp + k.fn == 0) continue;
    sum += k.iou_sum / (k.tp + 0.5 * k.fp + 0.5 * k.fn);
    ++count;
  }
  r.pq = count ? sum / count : 0.0;
  return r;
}

// ---------------------------------------------------------------- LSTQ

struct LstqResult {
  double s_assoc = 0.0;
  double s_cls = 0.0;
  double lstq = 0.0;
};

/// Tubes as explicit (sweep, point) sets; S_cls from a confusion matrix.
inline LstqResult brute_force_lstq(const std::vector<PanopticLabeling>& gt,
                                   const std::vector<PanopticLabeling>& pred,
                                   const Taxonomy& tax) {
  auto kind = [&](ClassId c) {
    for (const auto& ci : tax.classes()) {
      if (ci.id == c) return ci.kind;
    }
    return modal::ClassKind::ignore;
  };
  using Pt = std::pair<std::size_t, std::size_t>;
  std::map<InstanceId, std::set<Pt>> tubes, preds;
  std::map<std::pair<ClassId, ClassId>, long> confusion;
  for (std::size_t s = 0; s < gt.size(); ++s) {
    for (std::size_t i = 0; i < gt[s].sem.size(); ++i) {
      const ClassId g = gt[s].sem[i];
      if (kind(g) == modal::ClassKind::ignore) continue;
      confusion[{g, pred[s].sem[i]}] += 1;
      if (kind(g) == modal::ClassKind::thing && gt[s].inst[i] != 0) tubes[gt[s].inst[i]].insert({s, i});
      if (pred[s].inst[i] != 0) preds[pred[s].inst[i]].insert({s, i});
    }
  }
  LstqResult r;
  double total = 0.0;
  for (const auto& [t, tp] : tubes) {
    double acc = 0.0;
    for (const auto& [s, sp] : preds) {
      std::vector<Pt> both;
      std::set_intersection(tp.begin(), tp.end(), sp.begin(), sp.end(), std::back_inserter(both));
      if (both.empty()) continue;
      const double inter = static_cast<double>(both.size());
      acc += inter * inter / (static_cast<double>(tp.size() + sp.size()) - inter);
    }
    total += acc / static_cast<double>(tp.size());
  }
  r.s_assoc = tubes.empty() ? 0.0 : total / static_cast<double>(tubes.size());

  double iou_sum = 0.0;
  int classes = 0;
  for (const auto& ci : tax.classes()) {
    if (ci.kind == modal::ClassKind::ignore) continue;
    long tp = 0, fp = 0, fn = 0;
    for (const auto& [gp, count] : confusion) {
      if (gp.first == ci.id && gp.second == ci.id) tp += count;
      if (gp.first == ci.id && gp.second != ci.id) fn += count;
      if (gp.first != ci.id && gp.second == ci.id) fp += count;
    }
    if (tp + fp + fn == 0) continue;
    iou_sum += static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    ++classes;
  }
  r.s_cls = classes ? iou_sum / classes : 0.0;
  r.lstq = std::sqrt(r.s_assoc * r.s_cls);
  return r;
}

// ---------------------------------------------------------------- fusion

/// Panoptic fusion written out line by line. `membership[d][i]` is the score
/// of point i for detection d. Returns the assigned detection per point.
inline std::vector<int> fuse_line_by_line(const std::vector<modal::Point>& points,
                                          const std::vector<ClassId>& sem,
                                          const std::vector<modal::Detection>& dets,
                                          const std::vector<std::vector<double>>& membership,
                                          double fraction, double floor,
                                          PanopticLabeling& out) {
  std::vector<int> owner(points.size(), -1);
  // Detections arrive sorted by decreasing confidence.
  for (std::size_t d = 0; d < dets.size(); ++d) {
    const auto& u = dets[d].center;
    const auto& r = dets[d].extent;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double p[3] = {points[i].x, points[i].y, points[i].z};
      bool inside = true;
      for (int a = 0; a < 3; ++a) {
        const double half = r[a] + std::max(fraction * r[a], floor);
        if (!(std::abs(p[a] - u[a]) < half)) inside = false;
      }
      if (!inside) continue;
      if (sem[i] != dets[d].class_id) continue;
      if (owner[i] != -1) continue;
      if (membership[d][i] > 0.5) owner[i] = static_cast<int>(d);
    }
  }
  out.sem.assign(points.size(), 0);
  out.inst.assign(points.size(), 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (owner[i] >= 0) {
      out.sem[i] = dets[static_cast<std::size_t>(owner[i])].class_id;
      out.inst[i] = static_cast<InstanceId>(owner[i] + 1);
    } else {
      out.sem[i] = sem[i];
    }
  }
  return owner;
}

/// Membership function backed by a score table.
class TableMembership final : public modal::MembershipFunction {
 public:
  explicit TableMembership(std::vector<std::vector<double>> table) : table_(std::move(table)) {}
  std::vector<double> score(std::size_t d, std::span<const std::uint32_t> cand) const override {
    std::vector<double> out;
    for (auto i : cand) out.push_back(table_[d][i]);
    return out;
  }

 private:
  std::vector<std::vector<double>> table_;
};

// ---------------------------------------------------------------- numerics

/// Central differences of f at x, one coordinate at a time.
inline std::vector<double> finite_difference(const std::function<double(const std::vector<double>&)>& f,
                                             std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double keep = x[k];
    x[k] = keep + h;
    const double up = f(x);
    x[k] = keep - h;
    const double down = f(x);
    x[k] = keep;
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Relative agreement with a tiny absolute floor for gradients that vanish.
inline bool gradients_agree(double analytic, double numeric, double rtol, double atol = 1e-9) {
  return std::abs(analytic - numeric) <= rtol * std::max(std::abs(analytic), std::abs(numeric)) + atol;
}

/// Bilinear weights of four neighbours written out by hand.
inline double bilinear(double f00, double f10, double f01, double f11, double tx, double ty) {
  const double top = f00 * (1.0 - tx) + f10 * tx;
  const double bottom = f01 * (1.0 - tx) + f11 * tx;
  return top * (1.0 - ty) + bottom * ty;
}

}  // namespace oracle
