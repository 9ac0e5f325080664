#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace modal {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Pose = Eigen::Matrix4d;

using ClassId = std::uint16_t;
using InstanceId = std::uint32_t;

/// Class id 0 is reserved for unlabeled / ignored points.
inline constexpr ClassId kIgnoreClass = 0;
/// Instance id 0 means "no instance".
inline constexpr InstanceId kNoInstance = 0;

enum class Errc {
  parse_error,
  duplicate_class_id,
  invalid_taxonomy,
  invalid_argument,
  non_rigid_pose,
  invariant_violation,
  shape_mismatch,
  dimension_mismatch,
  out_of_range,
  truncated_record,
  count_mismatch,
  missing_input,
  empty_input,
  numeric_error,
  stale_cache,
  id_overflow,
};

const char* to_string(Errc code);

/// Library-wide exception. Every error path throws this with a code so the
/// CLI can map failures onto exit codes.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;
  /// Seconds relative to the reference sweep; 0 for the current sweep.
  double dt = 0.0;

  Vec3 xyz() const { return {x, y, z}; }
  bool operator==(const Point&) const = default;
};

enum class ClassKind { thing, stuff, ignore };

struct ClassInfo {
  ClassId id = 0;
  std::string name;
  ClassKind kind = ClassKind::ignore;
};

class Taxonomy {
 public:
  Taxonomy() = default;
  /// Validates: unique ids, >= 1 thing and >= 1 stuff class,
  /// min_instance_points >= 1, class 0 (if listed) must be of kind ignore.
  Taxonomy(std::vector<ClassInfo> classes, int min_instance_points);

  const std::vector<ClassInfo>& classes() const { return classes_; }
  int min_instance_points() const { return min_instance_points_; }

  const ClassInfo* find(ClassId id) const;
  bool contains(ClassId id) const { return find(id) != nullptr; }
  bool is_thing(ClassId id) const;
  bool is_stuff(ClassId id) const;
  /// Class 0, classes declared ignore, and unknown ids are all ignored.
  bool is_ignore(ClassId id) const;

  const std::vector<ClassId>& thing_ids() const { return thing_ids_; }
  const std::vector<ClassId>& stuff_ids() const { return stuff_ids_; }
  /// Thing and stuff ids in ascending order (no ignore classes).
  const std::vector<ClassId>& evaluated_ids() const { return evaluated_ids_; }

  /// Heatmap channel of a thing class, or -1 when the id is not a thing.
  int thing_index(ClassId id) const;
  /// Index into evaluated_ids(), or -1. Used for one-hot encodings.
  int class_index(ClassId id) const;
  std::size_t num_things() const { return thing_ids_.size(); }
  std::size_t num_classes() const { return evaluated_ids_.size(); }

 private:
  std::vector<ClassInfo> classes_;
  int min_instance_points_ = 1;
  std::vector<ClassId> thing_ids_;
  std::vector<ClassId> stuff_ids_;
  std::vector<ClassId> evaluated_ids_;
};

/// Taxonomy file: header `min_instance_points=<N>`, then `id<TAB>name<TAB>kind`.
Taxonomy parse_taxonomy(std::istream& in);
Taxonomy load_taxonomy(const std::filesystem::path& path);
void write_taxonomy(std::ostream& out, const Taxonomy& taxonomy);
void save_taxonomy(const std::filesystem::path& path, const Taxonomy& taxonomy);

bool is_rigid(const Pose& pose, double tol = 1e-9);
Pose inverse_rigid(const Pose& pose);

struct PointCloudSweep {
  double timestamp = 0.0;
  std::vector<Point> points;
  std::vector<ClassId> sem_labels;
  std::vector<InstanceId> inst_labels;
  Pose ego_pose = Pose::Identity();

  std::size_t size() const { return points.size(); }
  void validate(const Taxonomy& taxonomy) const;
};

struct SweepSequence {
  std::vector<PointCloudSweep> sweeps;
  double period = 0.1;

  /// Checks per-sweep invariants, strictly increasing timestamps and that
  /// every instance id keeps a single semantic class over the sequence.
  void validate(const Taxonomy& taxonomy) const;
};

enum class UnassignedThings { allowed, forbidden };

struct PanopticLabeling {
  std::vector<ClassId> sem;
  std::vector<InstanceId> inst;

  std::size_t size() const { return sem.size(); }
  void validate(const Taxonomy& taxonomy,
                UnassignedThings policy = UnassignedThings::allowed) const;
};

PanopticLabeling labeling_of(const PointCloudSweep& sweep);

/// Re-expresses the sweep in `target_pose`'s frame. Labels are untouched.
PointCloudSweep transform_to_frame(const PointCloudSweep& sweep, const Pose& target_pose);

/// Current sweep plus up to `history` previous sweeps, all in the current
/// sweep's frame, with dt set to (t_prev - t_current). Labels of history
/// points are carried along; only dt == 0 points count as current.
PointCloudSweep accumulate_history(const SweepSequence& sequence, std::size_t index,
                                   std::size_t history);

}  // namespace modal
