#include "modal/losses.hpp"

#include <algorithm>
#include <cmath>

namespace modal {

namespace {

void require_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw Error(Errc::shape_mismatch, std::string(what) + ": shapes differ");
}

}  // namespace

LossValue focal_loss(std::span<const double> pred, std::span<const double> target,
                     const FocalConfig& config) {
  require_same(pred.size(), target.size(), "focal_loss");
  LossValue out;
  out.gradient.assign(pred.size(), 0.0);
  double sum = 0.0;
  std::size_t peaks = 0;
  const double a = config.alpha;
  const double b = config.beta;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i];
    const double y = target[i];
    if (!(p > 0.0 && p < 1.0) || !(y >= 0.0 && y <= 1.0)) {
      throw Error(Errc::numeric_error, "focal_loss input outside its domain");
    }
    if (y == 1.0) {
      ++peaks;
      const double q = 1.0 - p;
      sum += -std::pow(q, a) * std::log(p);
      // d/dp [-(1-p)^a log p]
      out.gradient[i] = a * std::pow(q, a - 1.0) * std::log(p) - std::pow(q, a) / p;
    } else {
      const double w = std::pow(1.0 - y, b);
      const double lq = std::log(1.0 - p);
      sum += -w * std::pow(p, a) * lq;
      out.gradient[i] = -w * (a * std::pow(p, a - 1.0) * lq - std::pow(p, a) / (1.0 - p));
    }
  }
  const double norm = static_cast<double>(std::max<std::size_t>(1, peaks));
  out.value = sum / norm;
  for (auto& g : out.gradient) g /= norm;
  return out;
}

LossValue masked_cross_entropy(std::span<const double> logits, std::size_t num_classes,
                               std::span<const ClassId> target,
                               std::span<const std::uint8_t> mask, ClassId ignore_index) {
  if (num_classes == 0) throw Error(Errc::invalid_argument, "num_classes must be positive");
  require_same(logits.size(), target.size() * num_classes, "masked_cross_entropy logits");
  require_same(mask.size(), target.size(), "masked_cross_entropy mask");
  LossValue out;
  out.gradient.assign(logits.size(), 0.0);
  std::size_t n = 0;
  for (std::size_t v = 0; v < target.size(); ++v) {
    if (mask[v] && target[v] != ignore_index) {
      if (target[v] >= num_classes) throw Error(Errc::out_of_range, "target class id too large");
      ++n;
    }
  }
  if (n == 0) {
    out.degenerate = true;
    return out;
  }
  const double inv = 1.0 / static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t v = 0; v < target.size(); ++v) {
    if (!mask[v] || target[v] == ignore_index) continue;
    const double* z = logits.data() + v * num_classes;
    const double zmax = *std::max_element(z, z + num_classes);
    double denom = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) denom += std::exp(z[c] - zmax);
    const double log_denom = std::log(denom) + zmax;
    sum += log_denom - z[target[v]];
    double* g = out.gradient.data() + v * num_classes;
    for (std::size_t c = 0; c < num_classes; ++c) {
      g[c] = std::exp(z[c] - log_denom) * inv;
    }
    g[target[v]] -= inv;
  }
  out.value = sum * inv;
  return out;
}

LossValue l1_loss(std::span<const double> pred, std::span<const double> target,
                  std::span<const std::uint8_t> mask) {
  require_same(pred.size(), target.size(), "l1_loss");
  if (!mask.empty()) require_same(mask.size(), pred.size(), "l1_loss mask");
  LossValue out;
  out.gradient.assign(pred.size(), 0.0);
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) n += mask.empty() || mask[i];
  if (n == 0) throw Error(Errc::empty_input, "l1_loss with an empty mask");
  const double inv = 1.0 / static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    const double d = pred[i] - target[i];
    sum += std::abs(d);
    out.gradient[i] = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
  }
  out.value = sum * inv;
  return out;
}

LossValue bce_loss(std::span<const double> pred, std::span<const double> target, double eps) {
  require_same(pred.size(), target.size(), "bce_loss");
  if (pred.empty()) throw Error(Errc::empty_input, "bce_loss of an empty batch");
  LossValue out;
  out.gradient.assign(pred.size(), 0.0);
  const double inv = 1.0 / static_cast<double>(pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(pred[i], eps, 1.0 - eps);
    const double y = target[i];
    sum += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    out.gradient[i] = (p - y) / (p * (1.0 - p)) * inv;
  }
  out.value = sum * inv;
  return out;
}

LossValue bce_with_logits(std::span<const double> logits, std::span<const double> target) {
  require_same(logits.size(), target.size(), "bce_with_logits");
  if (logits.empty()) throw Error(Errc::empty_input, "bce_with_logits of an empty batch");
  LossValue out;
  out.gradient.assign(logits.size(), 0.0);
  const double inv = 1.0 / static_cast<double>(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    const double y = target[i];
    // log(1 + e^z) - y z, written to avoid overflow.
    sum += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    const double s = 1.0 / (1.0 + std::exp(-z));
    out.gradient[i] = (s - y) * inv;
  }
  out.value = sum * inv;
  return out;
}

double total_loss(const LossParts& parts, const LossWeights& weights) {
  const double track = parts.track.value_or(0.0);
  for (double v : {parts.det, parts.seg, parts.mem, track}) {
    if (std::isnan(v)) throw Error(Errc::numeric_error, "loss part is NaN");
  }
  return weights.det * parts.det + weights.seg * parts.seg + weights.mem * parts.mem +
         weights.track * track;
}

}  // namespace modal
