#include "modal/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace modal {

static_assert(std::endian::native == std::endian::little,
              "dataset I/O assumes a little-endian host");

std::uint32_t encode_label(ClassId sem, InstanceId inst) {
  if (inst > 0xFFFF) {
    throw Error(Errc::id_overflow, "instance id " + std::to_string(inst) + " exceeds 16 bits");
  }
  return static_cast<std::uint32_t>(sem) | (static_cast<std::uint32_t>(inst) << 16);
}

void decode_label(std::uint32_t word, ClassId& sem, InstanceId& inst) {
  sem = static_cast<ClassId>(word & 0xFFFFu);
  inst = word >> 16;
}

namespace {

std::string read_binary(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::missing_input, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_binary(const fs::path& path, const void* data, std::size_t bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::missing_input, "cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw Error(Errc::missing_input, "short write to " + path.string());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

std::vector<Point> read_points(const fs::path& path) {
  const auto bytes = read_binary(path);
  constexpr std::size_t rec = 4 * sizeof(float);
  if (bytes.size() % rec != 0) {
    throw Error(Errc::truncated_record, path.string() + ": size is not a multiple of 16 bytes");
  }
  std::vector<Point> out(bytes.size() / rec);
  for (std::size_t i = 0; i < out.size(); ++i) {
    float f[4];
    std::memcpy(f, bytes.data() + i * rec, rec);
    out[i].x = f[0];
    out[i].y = f[1];
    out[i].z = f[2];
    out[i].intensity = f[3];
  }
  return out;
}

void write_points(const fs::path& path, std::span<const Point> points) {
  std::vector<float> buf;
  buf.reserve(points.size() * 4);
  for (const auto& p : points) {
    buf.insert(buf.end(), {static_cast<float>(p.x), static_cast<float>(p.y),
                           static_cast<float>(p.z), static_cast<float>(p.intensity)});
  }
  write_binary(path, buf.data(), buf.size() * sizeof(float));
}

PanopticLabeling read_labels(const fs::path& path) {
  const auto bytes = read_binary(path);
  if (bytes.size() % sizeof(std::uint32_t) != 0) {
    throw Error(Errc::truncated_record, path.string() + ": size is not a multiple of 4 bytes");
  }
  const std::size_t n = bytes.size() / sizeof(std::uint32_t);
  PanopticLabeling out;
  out.sem.resize(n);
  out.inst.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t w;
    std::memcpy(&w, bytes.data() + i * sizeof w, sizeof w);
    decode_label(w, out.sem[i], out.inst[i]);
  }
  return out;
}

void write_labels(const fs::path& path, const PanopticLabeling& labels) {
  if (labels.sem.size() != labels.inst.size()) {
    throw Error(Errc::count_mismatch, "semantic and instance label counts differ");
  }
  std::vector<std::uint32_t> buf(labels.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = encode_label(labels.sem[i], labels.inst[i]);
  write_binary(path, buf.data(), buf.size() * sizeof(std::uint32_t));
}

PointCloudSweep read_sweep(const fs::path& bin, const fs::path& label) {
  PointCloudSweep s;
  s.points = read_points(bin);
  if (!label.empty()) {
    auto l = read_labels(label);
    if (l.size() != s.points.size()) {
      throw Error(Errc::count_mismatch, label.string() + ": label count " +
                                            std::to_string(l.size()) + " != point count " +
                                            std::to_string(s.points.size()));
    }
    s.sem_labels = std::move(l.sem);
    s.inst_labels = std::move(l.inst);
  } else {
    s.sem_labels.assign(s.points.size(), kIgnoreClass);
    s.inst_labels.assign(s.points.size(), kNoInstance);
  }
  return s;
}

void write_sweep(const fs::path& bin, const fs::path& label, const PointCloudSweep& sweep) {
  if (sweep.points.empty()) throw Error(Errc::empty_input, "refusing to write an empty sweep");
  if (sweep.sem_labels.size() != sweep.size() || sweep.inst_labels.size() != sweep.size()) {
    throw Error(Errc::count_mismatch, "sweep labels do not match its points");
  }
  write_points(bin, sweep.points);
  write_labels(label, PanopticLabeling{sweep.sem_labels, sweep.inst_labels});
}

std::vector<Pose> read_poses(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::missing_input, "cannot open " + path.string());
  std::vector<Pose> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::istringstream ss(line);
    Pose p = Pose::Identity();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) {
        if (!(ss >> p(r, c))) {
          throw Error(Errc::parse_error, path.string() + ":" + std::to_string(line_no) +
                                             ": expected 12 numbers");
        }
      }
    }
    std::string extra;
    if (ss >> extra) {
      throw Error(Errc::parse_error, path.string() + ":" + std::to_string(line_no) +
                                         ": trailing data");
    }
    out.push_back(p);
  }
  return out;
}

void write_poses(const fs::path& path, std::span<const Pose> poses) {
  std::string text;
  for (const auto& p : poses) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) {
        if (r + c > 0) text += ' ';
        text += fmt(p(r, c));
      }
    }
    text += '\n';
  }
  write_text(path, text);
}

std::string frame_name(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return buf;
}

fs::path DatasetLayout::bin(const std::string& seq, std::size_t frame) const {
  return sequence_dir(seq) / "velodyne" / (frame_name(frame) + ".bin");
}

fs::path DatasetLayout::label(const std::string& seq, std::size_t frame) const {
  return sequence_dir(seq) / "labels" / (frame_name(frame) + ".label");
}

std::vector<std::string> DatasetLayout::sequences() const {
  const auto dir = root / "sequences";
  if (!fs::is_directory(dir)) throw Error(Errc::missing_input, "no sequences/ under " + root.string());
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) out.push_back(e.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

std::size_t count_frames(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) return 0;
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ext) names.push_back(e.path().stem().string());
  }
  std::sort(names.begin(), names.end());
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] != frame_name(i)) {
      throw Error(Errc::invariant_violation,
                  dir.string() + ": frames are not consecutive at " + names[i] + ext);
    }
  }
  return names.size();
}

}  // namespace

std::size_t DatasetLayout::frame_count(const std::string& seq, bool labels_required) const {
  const auto dir = sequence_dir(seq);
  if (!fs::is_directory(dir)) throw Error(Errc::missing_input, "missing sequence " + dir.string());
  const std::size_t bins = count_frames(dir / "velodyne", ".bin");
  if (labels_required) {
    const std::size_t labels = count_frames(dir / "labels", ".label");
    if (labels != bins) {
      throw Error(Errc::invariant_violation, seq + ": " + std::to_string(bins) + " .bin vs " +
                                                 std::to_string(labels) + " .label files");
    }
  }
  return bins;
}

void write_sequence(const DatasetLayout& layout, const std::string& name,
                    const SweepSequence& sequence) {
  std::vector<Pose> poses;
  std::string times;
  for (std::size_t i = 0; i < sequence.sweeps.size(); ++i) {
    const auto& s = sequence.sweeps[i];
    write_sweep(layout.bin(name, i), layout.label(name, i), s);
    poses.push_back(s.ego_pose);
    times += fmt(s.timestamp) + '\n';
  }
  write_poses(layout.poses(name), poses);
  write_text(layout.times(name), times);
}

SweepSequence read_sequence(const DatasetLayout& layout, const std::string& name,
                            bool labels_required) {
  const std::size_t n = layout.frame_count(name, labels_required);
  if (n == 0) throw Error(Errc::missing_input, name + ": no frames");
  SweepSequence seq;
  std::vector<Pose> poses;
  if (fs::exists(layout.poses(name))) poses = read_poses(layout.poses(name));
  std::vector<double> times;
  if (fs::exists(layout.times(name))) {
    std::istringstream ss(read_text(layout.times(name)));
    double t;
    while (ss >> t) times.push_back(t);
  }
  if ((!poses.empty() && poses.size() != n) || (!times.empty() && times.size() != n)) {
    throw Error(Errc::count_mismatch, name + ": poses/times do not match frame count");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const bool has_label = labels_required || fs::exists(layout.label(name, i));
    auto s = read_sweep(layout.bin(name, i), has_label ? layout.label(name, i) : fs::path{});
    if (!poses.empty()) s.ego_pose = poses[i];
    s.timestamp = times.empty() ? 0.1 * static_cast<double>(i) : times[i];
    seq.sweeps.push_back(std::move(s));
  }
  seq.period = n > 1 ? (seq.sweeps.back().timestamp - seq.sweeps.front().timestamp) /
                           static_cast<double>(n - 1)
                     : 0.1;
  return seq;
}

void write_prediction(const DatasetLayout& layout, const std::string& name,
                      std::span<const PanopticLabeling> labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) write_labels(layout.label(name, i), labels[i]);
}

std::vector<PanopticLabeling> read_prediction(const DatasetLayout& layout,
                                              const std::string& name) {
  const auto dir = layout.sequence_dir(name);
  if (!fs::is_directory(dir)) throw Error(Errc::missing_input, "missing sequence " + dir.string());
  const std::size_t n = count_frames(dir / "labels", ".label");
  std::vector<PanopticLabeling> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(read_labels(layout.label(name, i)));
  return out;
}

void write_registry(const fs::path& path, std::span<const GtObject> objects) {
  std::string text = "# id class hx hy hz sx sy sz vx vy group\n";
  for (const auto& o : objects) {
    text += std::to_string(o.id) + ' ' + std::to_string(o.class_id);
    for (double v : {o.half_size.x(), o.half_size.y(), o.half_size.z(), o.start.x(), o.start.y(),
                     o.start.z(), o.velocity.x(), o.velocity.y()}) {
      text += ' ' + fmt(v);
    }
    text += ' ' + std::to_string(o.group) + '\n';
  }
  write_text(path, text);
}

std::vector<GtObject> read_registry(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<GtObject> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    GtObject o;
    unsigned long cls = 0;
    if (!(ss >> o.id >> cls >> o.half_size.x() >> o.half_size.y() >> o.half_size.z() >>
          o.start.x() >> o.start.y() >> o.start.z() >> o.velocity.x() >> o.velocity.y() >>
          o.group)) {
      throw Error(Errc::parse_error, path.string() + ": bad registry line");
    }
    o.class_id = static_cast<ClassId>(cls);
    out.push_back(o);
  }
  return out;
}

RunConfig RunConfig::parse(std::istream& in) {
  RunConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::parse_error, "config line " + std::to_string(line_no) + ": missing '='");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw Error(Errc::parse_error, "config line " + std::to_string(line_no) + ": empty key");
    }
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::istringstream in(read_text(path));
  return parse(in);
}

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  char* end = nullptr;
  const double v = std::strtod(it->second.c_str(), &end);
  if (end == it->second.c_str() || *end != '\0') {
    throw Error(Errc::parse_error, "config key '" + key + "' is not a number");
  }
  return v;
}

long RunConfig::get_int(const std::string& key, long fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  char* end = nullptr;
  const long v = std::strtol(it->second.c_str(), &end, 10);
  if (end == it->second.c_str() || *end != '\0') {
    throw Error(Errc::parse_error, "config key '" + key + "' is not an integer");
  }
  return v;
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const auto& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error(Errc::parse_error, "config key '" + key + "' is not a boolean");
}

void RunConfig::apply_seed_override() {
  if (const char* env = std::getenv("MODAL_PANOPTIC_SEED"); env != nullptr && *env != '\0') {
    values_["seed"] = trim(env);
    (void)get_int("seed", 0);
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::missing_input, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::missing_input, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(Errc::missing_input, "short write to " + path.string());
  }
  fs::rename(tmp, path);
}

}  // namespace modal
