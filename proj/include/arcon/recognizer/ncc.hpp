#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>

namespace arcon::recognizer {

inline constexpr int kTemplateSide = 32;
inline constexpr std::size_t kTemplateSize = kTemplateSide * kTemplateSide;

using Patch = std::array<double, kTemplateSize>;

// Below this squared norm a centered patch is treated as zero-variance.
inline constexpr double kZeroVarianceNorm2 = 1e-12;

/// Mean-subtracts and L2-normalizes `raw` in place. Returns false (and
/// zeroes the patch) when the input has zero variance.
inline bool normalize_patch(std::span<double, kTemplateSize> raw) {
  double mean = 0.0;
  for (double v : raw) mean += v;
  mean /= static_cast<double>(kTemplateSize);
  double norm2 = 0.0;
  for (double& v : raw) {
    v -= mean;
    norm2 += v * v;
  }
  if (norm2 < kZeroVarianceNorm2) {
    std::fill(raw.begin(), raw.end(), 0.0);
    return false;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& v : raw) v *= inv;
  return true;
}

inline double dot(std::span<const double, kTemplateSize> a, std::span<const double, kTemplateSize> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < kTemplateSize; ++i) acc += a[i] * b[i];
  return acc;
}

/// Normalized cross-correlation of a normalized template against a raw
/// window. A zero-variance window scores 0.
inline double ncc(std::span<const double, kTemplateSize> templ, std::span<const double, kTemplateSize> window) {
  Patch w;
  std::copy(window.begin(), window.end(), w.begin());
  if (!normalize_patch(w)) return 0.0;
  return std::clamp(dot(templ, w), -1.0, 1.0);
}

}  // namespace arcon::recognizer
