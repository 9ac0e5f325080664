#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "modal/core_types.hpp"
#include "modal/synth.hpp"

namespace modal {

namespace fs = std::filesystem;

/// Low 16 bits semantic, high 16 bits instance. Ids above 65535 throw.
std::uint32_t encode_label(ClassId sem, InstanceId inst);
void decode_label(std::uint32_t word, ClassId& sem, InstanceId& inst);

/// float32 x, y, z, intensity per point, little-endian.
std::vector<Point> read_points(const fs::path& path);
void write_points(const fs::path& path, std::span<const Point> points);

PanopticLabeling read_labels(const fs::path& path);
void write_labels(const fs::path& path, const PanopticLabeling& labels);

/// Labels are optional on read; an empty path skips them.
PointCloudSweep read_sweep(const fs::path& bin, const fs::path& label);
/// Refuses empty sweeps.
void write_sweep(const fs::path& bin, const fs::path& label, const PointCloudSweep& sweep);

/// KITTI style: 12 numbers per line, the top 3x4 block of each pose.
std::vector<Pose> read_poses(const fs::path& path);
void write_poses(const fs::path& path, std::span<const Pose> poses);

std::string frame_name(std::size_t index);

/// root/sequences/<name>/{velodyne,labels}/NNNNNN.{bin,label}, poses.txt, times.txt.
struct DatasetLayout {
  fs::path root;

  fs::path taxonomy() const { return root / "taxonomy.txt"; }
  fs::path sequence_dir(const std::string& name) const { return root / "sequences" / name; }
  fs::path bin(const std::string& seq, std::size_t frame) const;
  fs::path label(const std::string& seq, std::size_t frame) const;
  fs::path poses(const std::string& seq) const { return sequence_dir(seq) / "poses.txt"; }
  fs::path times(const std::string& seq) const { return sequence_dir(seq) / "times.txt"; }
  fs::path registry(const std::string& seq) const { return sequence_dir(seq) / "registry.txt"; }

  /// Sorted sequence directory names.
  std::vector<std::string> sequences() const;
  /// Number of frames; checks consecutive numbering and .bin/.label parity.
  std::size_t frame_count(const std::string& seq, bool labels_required = true) const;
};

void write_sequence(const DatasetLayout& layout, const std::string& name,
                    const SweepSequence& sequence);
SweepSequence read_sequence(const DatasetLayout& layout, const std::string& name,
                            bool labels_required = true);

/// Labels only, same layout, for predictions.
void write_prediction(const DatasetLayout& layout, const std::string& name,
                      std::span<const PanopticLabeling> labels);
std::vector<PanopticLabeling> read_prediction(const DatasetLayout& layout,
                                              const std::string& name);

/// One object per line: id class hx hy hz sx sy sz vx vy group.
void write_registry(const fs::path& path, std::span<const GtObject> objects);
std::vector<GtObject> read_registry(const fs::path& path);

/// Flat `key = value` configuration with `#` comments.
class RunConfig {
 public:
  static RunConfig parse(std::istream& in);
  static RunConfig load(const fs::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  const std::map<std::string, std::string>& values() const { return values_; }

  /// MODAL_PANOPTIC_SEED, when set, replaces `seed`.
  void apply_seed_override();

 private:
  std::map<std::string, std::string> values_;
};

std::string read_text(const fs::path& path);
/// Writes through a temporary file so readers never see partial output.
void write_text(const fs::path& path, const std::string& text);

}  // namespace modal
