#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "modal/io.hpp"
#include "modal/synth.hpp"

using namespace modal;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("modal_io_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST(Label, BitSplit) {
  const std::uint32_t w = encode_label(0x0102, 0x0304);
  EXPECT_EQ(w, 0x03040102u);
  EXPECT_EQ(w & 0xFFFFu, 0x0102u);
  EXPECT_EQ(w >> 16, 0x0304u);
  ClassId s;
  InstanceId i;
  decode_label(0xFFFF0001u, s, i);
  EXPECT_EQ(s, 1);
  EXPECT_EQ(i, 0xFFFFu);
  EXPECT_THROW(encode_label(1, 0x10000), Error);
}

TEST(Points, RoundTripIsBitExactInFloat32) {
  TempDir dir;
  std::mt19937_64 rng(3);
  std::normal_distribution<float> g(0.f, 20.f);
  std::vector<Point> pts(100);
  for (auto& p : pts) {
    p.x = g(rng);
    p.y = g(rng);
    p.z = g(rng);
    p.intensity = g(rng);
  }
  write_points(dir.path / "a.bin", pts);
  EXPECT_EQ(fs::file_size(dir.path / "a.bin"), 100u * 16u);
  const auto back = read_points(dir.path / "a.bin");
  ASSERT_EQ(back.size(), pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_EQ(back[i].x, pts[i].x);
    EXPECT_EQ(back[i].intensity, pts[i].intensity);
  }
}

TEST(Points, TruncatedFileRejected) {
  TempDir dir;
  std::ofstream(dir.path / "bad.bin", std::ios::binary).write("abcdefg", 7);
  EXPECT_THROW(read_points(dir.path / "bad.bin"), Error);
  try {
    read_points(dir.path / "missing.bin");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::missing_input);
  }
}

TEST(Labels, RawWordsOnDisk) {
  TempDir dir;
  PanopticLabeling l;
  l.sem = {1, 4};
  l.inst = {7, 0};
  write_labels(dir.path / "a.label", l);
  std::ifstream in(dir.path / "a.label", std::ios::binary);
  unsigned char raw[8];
  in.read(reinterpret_cast<char*>(raw), 8);
  EXPECT_EQ(raw[0], 1);
  EXPECT_EQ(raw[1], 0);
  EXPECT_EQ(raw[2], 7);
  EXPECT_EQ(raw[4], 4);
  const auto back = read_labels(dir.path / "a.label");
  EXPECT_EQ(back.sem, l.sem);
  EXPECT_EQ(back.inst, l.inst);
}

TEST(Poses, RoundTrip) {
  TempDir dir;
  Pose p = Pose::Identity();
  p.block<3, 3>(0, 0) = Eigen::AngleAxisd(0.3, Vec3::UnitZ()).toRotationMatrix();
  p.block<3, 1>(0, 3) = Vec3(1.5, -2, 0.25);
  const std::vector<Pose> poses = {Pose::Identity(), p};
  write_poses(dir.path / "poses.txt", poses);
  const auto back = read_poses(dir.path / "poses.txt");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1], p);
}

TEST(Dataset, SequenceRoundTrip) {
  TempDir dir;
  const auto tax = synthetic_taxonomy();
  SceneConfig cfg;
  cfg.seed = 4;
  cfg.sweep_count = 2;
  const auto seq = generate_sequence(cfg, tax);
  const DatasetLayout layout{dir.path};
  write_sequence(layout, "00", seq.sequence);
  write_registry(layout.registry("00"), seq.registry);
  EXPECT_EQ(layout.sequences(), (std::vector<std::string>{"00"}));
  EXPECT_EQ(layout.frame_count("00"), 2u);
  EXPECT_EQ(layout.bin("00", 1).filename(), "000001.bin");
  const auto back = read_sequence(layout, "00");
  ASSERT_EQ(back.sweeps.size(), 2u);
  EXPECT_EQ(back.sweeps[1].sem_labels, seq.sequence.sweeps[1].sem_labels);
  EXPECT_EQ(back.sweeps[1].inst_labels, seq.sequence.sweeps[1].inst_labels);
  const auto reg = read_registry(layout.registry("00"));
  ASSERT_EQ(reg.size(), seq.registry.size());
  EXPECT_EQ(reg[0].half_size, seq.registry[0].half_size);
  fs::remove(layout.label("00", 1));
  EXPECT_THROW(layout.frame_count("00"), Error);
  EXPECT_EQ(layout.frame_count("00", false), 2u);
}

TEST(RunConfigFile, ParseAndTypes) {
  std::istringstream in("# comment\nseed = 5\nrate=0.25\n\nflag = true\nname = a b\n");
  auto c = RunConfig::parse(in);
  EXPECT_EQ(c.get_int("seed", 0), 5);
  EXPECT_EQ(c.get_double("rate", 0), 0.25);
  EXPECT_TRUE(c.get_bool("flag", false));
  EXPECT_EQ(c.get("name", ""), "a b");
  EXPECT_EQ(c.get("absent", "x"), "x");
  EXPECT_THROW(c.get_int("name", 0), Error);
  std::istringstream bad("novalue\n");
  EXPECT_THROW(RunConfig::parse(bad), Error);
}

TEST(RunConfigFile, SeedOverride) {
  RunConfig c;
  c.set("seed", "1");
  setenv("MODAL_PANOPTIC_SEED", "99", 1);
  c.apply_seed_override();
  unsetenv("MODAL_PANOPTIC_SEED");
  EXPECT_EQ(c.get_int("seed", 0), 99);
}

TEST(Text, AtomicWrite) {
  TempDir dir;
  write_text(dir.path / "x.txt", "hello\n");
  EXPECT_EQ(read_text(dir.path / "x.txt"), "hello\n");
  EXPECT_EQ(frame_name(12), "000012");
}
