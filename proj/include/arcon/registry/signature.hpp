#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>

#include "arcon/core/image.hpp"
#include "arcon/recognizer/hash.hpp"
#include "arcon/recognizer/ncc.hpp"

namespace arcon::registry {

inline constexpr double kDefaultDetailThreshold = 2.0;

struct DetailReport {
  double score = 0.0;
  bool pass = false;
  double threshold = kDefaultDetailThreshold;
};

inline Json to_json(const DetailReport& r) {
  return Json{{"score", r.score}, {"pass", r.pass}, {"threshold", r.threshold}};
}

/// Mean of |dx| + |dy| (forward differences) over interior pixels, i.e.
/// excluding the one-pixel border.
inline DetailReport validate_detail(const GrayFrame& image, double threshold = kDefaultDetailThreshold) {
  validate_frame(image);
  std::int64_t total = 0;
  for (int y = 1; y + 1 < image.height; ++y) {
    for (int x = 1; x + 1 < image.width; ++x) {
      const int c = image.at(x, y);
      total += std::abs(image.at(x + 1, y) - c) + std::abs(image.at(x, y + 1) - c);
    }
  }
  const auto count = static_cast<std::int64_t>(image.width - 2) * (image.height - 2);
  DetailReport r;
  r.threshold = threshold;
  r.score = static_cast<double>(total) / static_cast<double>(count);
  r.pass = r.score >= threshold;
  return r;
}

struct ImageSignature {
  std::uint64_t dhash = 0;
  recognizer::Patch templ{};  // zero-mean, unit-L2 (all zero for a flat source)
  double detail_score = 0.0;
  int source_width = 0;
  int source_height = 0;

  friend bool operator==(const ImageSignature&, const ImageSignature&) = default;
};

/// Builds the matching data for one registration image. Throws
/// InsufficientDetail (detail = the DetailReport) below `threshold`.
inline ImageSignature make_signature(const GrayFrame& image, double threshold = kDefaultDetailThreshold) {
  const DetailReport report = validate_detail(image, threshold);
  if (!report.pass) {
    throw Error(ErrorKind::InsufficientDetail,
                "detail score " + std::to_string(report.score) + " below threshold " + std::to_string(threshold),
                to_json(report));
  }
  ImageSignature sig;
  sig.dhash = recognizer::dhash(image);
  const auto cells = box_resample(image, recognizer::kTemplateSide, recognizer::kTemplateSide);
  std::copy(cells.begin(), cells.end(), sig.templ.begin());
  recognizer::normalize_patch(sig.templ);
  sig.detail_score = report.score;
  sig.source_width = image.width;
  sig.source_height = image.height;
  return sig;
}

inline double template_distance(const ImageSignature& a, const ImageSignature& b) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < recognizer::kTemplateSize; ++i) {
    const double d = a.templ[i] - b.templ[i];
    d2 += d * d;
  }
  return std::sqrt(d2);
}

inline bool is_duplicate(const ImageSignature& a, const ImageSignature& b) {
  return a.dhash == b.dhash && template_distance(a, b) < 1e-6;
}

}  // namespace arcon::registry
