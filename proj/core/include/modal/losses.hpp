#pragma once

#include <optional>
#include <span>
#include <vector>

#include "modal/core_types.hpp"

namespace modal {

struct LossValue {
  double value = 0.0;
  std::vector<double> gradient;  // same layout as the prediction input
  /// Set when the loss had nothing to average over and returned 0.
  bool degenerate = false;
};

struct FocalConfig {
  double alpha = 2.0;
  double beta = 4.0;
  double eps = 1e-6;
};

/// Penalty-reduced focal loss over flattened heatmaps. A cell counts as a peak
/// when its target is exactly 1. Normalized by max(1, number of peaks).
LossValue focal_loss(std::span<const double> pred, std::span<const double> target,
                     const FocalConfig& config = {});

/// Mean softmax cross-entropy over voxels with mask set and a non-ignore
/// target. `logits` is row-major [voxel][class].
LossValue masked_cross_entropy(std::span<const double> logits, std::size_t num_classes,
                               std::span<const ClassId> target,
                               std::span<const std::uint8_t> mask,
                               ClassId ignore_index = kIgnoreClass);

/// Mean |pred - target| over masked entries. An empty mask means all entries.
LossValue l1_loss(std::span<const double> pred, std::span<const double> target,
                  std::span<const std::uint8_t> mask = {});

/// Mean binary cross-entropy; pred is clamped to [eps, 1 - eps].
LossValue bce_loss(std::span<const double> pred, std::span<const double> target,
                   double eps = 1e-6);

/// BCE taking pre-sigmoid logits; the gradient is with respect to the logits.
LossValue bce_with_logits(std::span<const double> logits, std::span<const double> target);

struct LossParts {
  double det = 0.0;
  double seg = 0.0;
  double mem = 0.0;
  std::optional<double> track;
};

struct LossWeights {
  double det = 1.0;
  double seg = 1.0;
  double mem = 1.0;
  double track = 1.0;
};

/// Weighted sum; a missing track term counts as 0. Throws on NaN.
double total_loss(const LossParts& parts, const LossWeights& weights = {});

}  // namespace modal
