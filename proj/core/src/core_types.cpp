#include "modal/core_types.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace modal {

const char* to_string(Errc code) {
  switch (code) {
    case Errc::parse_error: return "ParseError";
    case Errc::duplicate_class_id: return "DuplicateClassId";
    case Errc::invalid_taxonomy: return "InvalidTaxonomy";
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::non_rigid_pose: return "NonRigidPose";
    case Errc::invariant_violation: return "InvariantViolation";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::out_of_range: return "OutOfRange";
    case Errc::truncated_record: return "TruncatedRecord";
    case Errc::count_mismatch: return "CountMismatch";
    case Errc::missing_input: return "MissingInput";
    case Errc::empty_input: return "EmptyInput";
    case Errc::numeric_error: return "NumericError";
    case Errc::stale_cache: return "StaleCache";
    case Errc::id_overflow: return "IdOverflow";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

// ---------------------------------------------------------------------------
// Taxonomy

Taxonomy::Taxonomy(std::vector<ClassInfo> classes, int min_instance_points)
    : classes_(std::move(classes)), min_instance_points_(min_instance_points) {
  if (min_instance_points_ < 1) {
    throw Error(Errc::invalid_taxonomy, "min_instance_points must be >= 1");
  }
  std::set<ClassId> seen;
  for (const auto& c : classes_) {
    if (!seen.insert(c.id).second) {
      throw Error(Errc::duplicate_class_id, "class id " + std::to_string(c.id) + " declared twice");
    }
    if (c.id == kIgnoreClass && c.kind != ClassKind::ignore) {
      throw Error(Errc::invalid_taxonomy, "class id 0 is reserved for ignore");
    }
  }
  std::sort(classes_.begin(), classes_.end(),
            [](const ClassInfo& a, const ClassInfo& b) { return a.id < b.id; });
  for (const auto& c : classes_) {
    if (c.kind == ClassKind::thing) thing_ids_.push_back(c.id);
    if (c.kind == ClassKind::stuff) stuff_ids_.push_back(c.id);
    if (c.kind != ClassKind::ignore) evaluated_ids_.push_back(c.id);
  }
  if (thing_ids_.empty() || stuff_ids_.empty()) {
    throw Error(Errc::invalid_taxonomy, "taxonomy needs at least one thing and one stuff class");
  }
}

const ClassInfo* Taxonomy::find(ClassId id) const {
  auto it = std::lower_bound(classes_.begin(), classes_.end(), id,
                             [](const ClassInfo& c, ClassId v) { return c.id < v; });
  if (it == classes_.end() || it->id != id) return nullptr;
  return &*it;
}

bool Taxonomy::is_thing(ClassId id) const {
  const auto* c = find(id);
  return c != nullptr && c->kind == ClassKind::thing;
}

bool Taxonomy::is_stuff(ClassId id) const {
  const auto* c = find(id);
  return c != nullptr && c->kind == ClassKind::stuff;
}

bool Taxonomy::is_ignore(ClassId id) const {
  if (id == kIgnoreClass) return true;
  const auto* c = find(id);
  return c == nullptr || c->kind == ClassKind::ignore;
}

int Taxonomy::thing_index(ClassId id) const {
  auto it = std::lower_bound(thing_ids_.begin(), thing_ids_.end(), id);
  if (it == thing_ids_.end() || *it != id) return -1;
  return static_cast<int>(it - thing_ids_.begin());
}

int Taxonomy::class_index(ClassId id) const {
  auto it = std::lower_bound(evaluated_ids_.begin(), evaluated_ids_.end(), id);
  if (it == evaluated_ids_.end() || *it != id) return -1;
  return static_cast<int>(it - evaluated_ids_.begin());
}

namespace {

std::string trim(std::string s) {
  auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

ClassKind parse_kind(const std::string& s, int line_no) {
  if (s == "thing") return ClassKind::thing;
  if (s == "stuff") return ClassKind::stuff;
  if (s == "ignore") return ClassKind::ignore;
  throw Error(Errc::parse_error, "line " + std::to_string(line_no) + ": unknown kind '" + s + "'");
}

const char* kind_name(ClassKind k) {
  switch (k) {
    case ClassKind::thing: return "thing";
    case ClassKind::stuff: return "stuff";
    case ClassKind::ignore: return "ignore";
  }
  return "ignore";
}

}  // namespace

Taxonomy parse_taxonomy(std::istream& in) {
  std::string line;
  int line_no = 0;
  std::optional<int> min_points;
  std::vector<ClassInfo> classes;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (!min_points) {
      const std::string key = "min_instance_points=";
      const auto t = trim(line);
      if (t.rfind(key, 0) != 0) {
        throw Error(Errc::parse_error, "expected header 'min_instance_points=<N>'");
      }
      try {
        std::size_t used = 0;
        const auto rest = t.substr(key.size());
        min_points = std::stoi(rest, &used);
        if (used != rest.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw Error(Errc::parse_error, "bad min_instance_points value");
      }
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (fields.size() != 3) {
      throw Error(Errc::parse_error,
                  "line " + std::to_string(line_no) + ": expected id<TAB>name<TAB>kind");
    }
    ClassInfo info;
    try {
      std::size_t used = 0;
      const auto id_str = trim(fields[0]);
      const long id = std::stol(id_str, &used);
      if (used != id_str.size() || id < 0 || id > 0xFFFF) throw std::out_of_range("id");
      info.id = static_cast<ClassId>(id);
    } catch (const std::exception&) {
      throw Error(Errc::parse_error, "line " + std::to_string(line_no) + ": bad class id");
    }
    info.name = trim(fields[1]);
    info.kind = parse_kind(trim(fields[2]), line_no);
    classes.push_back(std::move(info));
  }
  if (!min_points) throw Error(Errc::parse_error, "missing min_instance_points header");
  return Taxonomy(std::move(classes), *min_points);
}

Taxonomy load_taxonomy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::missing_input, "cannot open taxonomy " + path.string());
  return parse_taxonomy(in);
}

void write_taxonomy(std::ostream& out, const Taxonomy& taxonomy) {
  out << "min_instance_points=" << taxonomy.min_instance_points() << '\n';
  for (const auto& c : taxonomy.classes()) {
    out << c.id << '\t' << c.name << '\t' << kind_name(c.kind) << '\n';
  }
}

void save_taxonomy(const std::filesystem::path& path, const Taxonomy& taxonomy) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::missing_input, "cannot write " + path.string());
  write_taxonomy(out, taxonomy);
}

// ---------------------------------------------------------------------------
// Poses

bool is_rigid(const Pose& pose, double tol) {
  if (!pose.allFinite()) return false;
  const Eigen::Matrix3d r = pose.topLeftCorner<3, 3>();
  if (((r.transpose() * r) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) {
    return false;
  }
  if (std::abs(r.determinant() - 1.0) > tol) return false;
  const Eigen::RowVector4d last = pose.row(3);
  return (last - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() <= tol;
}

Pose inverse_rigid(const Pose& pose) {
  if (!is_rigid(pose)) throw Error(Errc::non_rigid_pose, "cannot invert a non-rigid pose");
  Pose inv = Pose::Identity();
  const Eigen::Matrix3d rt = pose.topLeftCorner<3, 3>().transpose();
  inv.topLeftCorner<3, 3>() = rt;
  inv.topRightCorner<3, 1>() = -rt * pose.topRightCorner<3, 1>();
  return inv;
}

// ---------------------------------------------------------------------------
// Sweeps and labelings

void PointCloudSweep::validate(const Taxonomy& taxonomy) const {
  if (sem_labels.size() != points.size() || inst_labels.size() != points.size()) {
    throw Error(Errc::count_mismatch, "label arrays must match point count");
  }
  if (!is_rigid(ego_pose)) throw Error(Errc::non_rigid_pose, "ego pose is not rigid");
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw Error(Errc::invariant_violation, "non-finite point " + std::to_string(i));
    }
    if (inst_labels[i] != kNoInstance && !taxonomy.is_thing(sem_labels[i])) {
      throw Error(Errc::invariant_violation,
                  "instance id on non-thing point " + std::to_string(i));
    }
  }
}

void SweepSequence::validate(const Taxonomy& taxonomy) const {
  std::map<InstanceId, ClassId> inst_class;
  for (std::size_t s = 0; s < sweeps.size(); ++s) {
    const auto& sweep = sweeps[s];
    sweep.validate(taxonomy);
    if (s > 0 && !(sweep.timestamp > sweeps[s - 1].timestamp)) {
      throw Error(Errc::invariant_violation, "timestamps must be strictly increasing");
    }
    for (std::size_t i = 0; i < sweep.size(); ++i) {
      const auto id = sweep.inst_labels[i];
      if (id == kNoInstance) continue;
      auto [it, inserted] = inst_class.emplace(id, sweep.sem_labels[i]);
      if (!inserted && it->second != sweep.sem_labels[i]) {
        throw Error(Errc::invariant_violation,
                    "instance " + std::to_string(id) + " changes class across the sequence");
      }
    }
  }
}

void PanopticLabeling::validate(const Taxonomy& taxonomy, UnassignedThings policy) const {
  if (sem.size() != inst.size()) throw Error(Errc::count_mismatch, "sem/inst length differ");
  std::map<InstanceId, ClassId> inst_class;
  for (std::size_t i = 0; i < sem.size(); ++i) {
    if (inst[i] != kNoInstance) {
      if (!taxonomy.is_thing(sem[i])) {
        throw Error(Errc::invariant_violation, "instance id on non-thing point");
      }
      auto [it, inserted] = inst_class.emplace(inst[i], sem[i]);
      if (!inserted && it->second != sem[i]) {
        throw Error(Errc::invariant_violation, "instance spans several classes");
      }
    } else if (policy == UnassignedThings::forbidden && taxonomy.is_thing(sem[i])) {
      throw Error(Errc::invariant_violation, "thing point without instance id");
    }
  }
}

PanopticLabeling labeling_of(const PointCloudSweep& sweep) {
  return PanopticLabeling{sweep.sem_labels, sweep.inst_labels};
}

PointCloudSweep transform_to_frame(const PointCloudSweep& sweep, const Pose& target_pose) {
  if (!is_rigid(sweep.ego_pose) || !is_rigid(target_pose)) {
    throw Error(Errc::non_rigid_pose, "transform_to_frame requires rigid poses");
  }
  const Pose rel = inverse_rigid(target_pose) * sweep.ego_pose;
  const Eigen::Matrix3d r = rel.topLeftCorner<3, 3>();
  const Vec3 t = rel.topRightCorner<3, 1>();
  PointCloudSweep out = sweep;
  out.ego_pose = target_pose;
  for (auto& p : out.points) {
    const Vec3 q = r * p.xyz() + t;
    p.x = q.x();
    p.y = q.y();
    p.z = q.z();
  }
  return out;
}

PointCloudSweep accumulate_history(const SweepSequence& sequence, std::size_t index,
                                   std::size_t history) {
  if (index >= sequence.sweeps.size()) {
    throw Error(Errc::out_of_range, "sweep index past end of sequence");
  }
  const auto& current = sequence.sweeps[index];
  PointCloudSweep out = current;
  for (auto& p : out.points) p.dt = 0.0;
  const std::size_t first = index >= history ? index - history : 0;
  for (std::size_t s = first; s < index; ++s) {
    auto moved = transform_to_frame(sequence.sweeps[s], current.ego_pose);
    const double dt = moved.timestamp - current.timestamp;
    for (std::size_t i = 0; i < moved.size(); ++i) {
      auto p = moved.points[i];
      p.dt = dt;
      out.points.push_back(p);
      out.sem_labels.push_back(moved.sem_labels[i]);
      out.inst_labels.push_back(moved.inst_labels[i]);
    }
  }
  return out;
}

}  // namespace modal
