#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "modal/io.hpp"
#include "modal/pipeline.hpp"

namespace modal::cli {

/// Effective run configuration: built-in defaults, then the config file, then
/// `--set` pairs and dedicated flags, then MODAL_PANOPTIC_SEED.
class Settings {
 public:
  /// Unknown keys are rejected.
  static Settings resolve(const std::string& config_path,
                          const std::vector<std::pair<std::string, std::string>>& overrides);

  const RunConfig& raw() const { return cfg_; }
  /// Sorted `key = value` lines.
  std::string text() const;

  std::uint64_t seed() const;
  int sequences() const;
  std::string membership() const { return cfg_.get("membership", "nn"); }

  GridSpec grid() const;
  SceneConfig scene() const;
  DetectorNoise noise() const;
  DetectorConfig detector() const;
  /// Needs class means only for the cwm strategy.
  ExtentStrategy strategy(const CwmStats& cwm) const;
  RoiMargin margin() const;
  PipelineConfig pipeline() const;
  MembershipTrainConfig train() const;
  double pair_jitter() const;
  bool class_mean_floor() const;
  bool cwm_gates() const;

 private:
  RunConfig cfg_;
};

}  // namespace modal::cli
