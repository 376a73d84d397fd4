#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "arcon/core/image.hpp"
#include "arcon/recognizer/ncc.hpp"
#include "arcon/registry/registry.hpp"

namespace arcon::recognizer {

struct ScanConfig {
  std::vector<double> scales{0.5, 0.75, 1.0, 1.25, 1.5};
  int stride = 8;
  double threshold = 0.80;
  int max_simultaneous = 5;

  void validate() const {
    if (scales.empty()) throw Error(ErrorKind::ConfigInvalid, "scan scales must not be empty");
    for (double s : scales) {
      if (!(s > 0) || !std::isfinite(s)) throw Error(ErrorKind::ConfigInvalid, "scan scales must be positive");
    }
    if (stride < 1) throw Error(ErrorKind::ConfigInvalid, "scan stride must be >= 1");
    if (!(threshold > 0 && threshold <= 1)) throw Error(ErrorKind::ConfigInvalid, "threshold must be in (0, 1]");
    if (max_simultaneous < 1) throw Error(ErrorKind::ConfigInvalid, "max_simultaneous must be >= 1");
  }
};

struct MatchCandidate {
  Rect bbox;
  double score = 0.0;
  double scale = 1.0;
  std::size_t signature_index = 0;

  friend bool operator==(const MatchCandidate&, const MatchCandidate&) = default;
};

/// True when `a` wins over `b`: higher score, then smaller y, x, scale,
/// signature index.
inline bool better_candidate(const MatchCandidate& a, const MatchCandidate& b) {
  if (a.score != b.score) return a.score > b.score;
  return std::tie(a.bbox.y, a.bbox.x, a.scale, a.signature_index) <
         std::tie(b.bbox.y, b.bbox.x, b.scale, b.signature_index);
}

struct Recognition {
  std::string device_id;
  MatchCandidate best;

  friend bool operator==(const Recognition&, const Recognition&) = default;
};

inline Json to_json(const MatchCandidate& c) {
  return Json{{"bbox", {{"x", c.bbox.x}, {"y", c.bbox.y}, {"w", c.bbox.w}, {"h", c.bbox.h}}},
              {"score", c.score},
              {"scale", c.scale},
              {"signature_index", c.signature_index}};
}

inline Json to_json(const Recognition& r) {
  Json j = to_json(r.best);
  j["device_id"] = r.device_id;
  return j;
}

inline int window_side(double scale) { return static_cast<int>(std::lround(kTemplateSide * scale)); }

/// Best candidate per record, regardless of threshold. Every window is
/// resampled and normalized once and scored against all signatures, so the
/// cost grows with frame area rather than with the number of devices.
/// Throws WindowLargerThanFrame when no scale fits inside the frame.
inline std::vector<std::optional<MatchCandidate>> best_candidates(const GrayFrame& frame,
                                                                  const std::vector<registry::DeviceRecord>& records,
                                                                  const ScanConfig& cfg) {
  validate_frame(frame);
  cfg.validate();
  std::vector<std::optional<MatchCandidate>> best(records.size());

  bool any_scale_fits = false;
  Patch window;
  for (double scale : cfg.scales) {
    const int side = window_side(scale);
    if (side < 1 || side > frame.width || side > frame.height) continue;
    any_scale_fits = true;
    if (records.empty()) continue;
    const AxisWeights weights(side, kTemplateSide);
    for (int y = 0; y + side <= frame.height; y += cfg.stride) {
      for (int x = 0; x + side <= frame.width; x += cfg.stride) {
        const Rect box{x, y, side, side};
        const ResampledSums sums = box_resample_sums(frame, box, weights, weights);
        for (std::size_t i = 0; i < kTemplateSize; ++i) window[i] = sums.value(i);
        const bool textured = normalize_patch(window);
        for (std::size_t r = 0; r < records.size(); ++r) {
          const auto& sigs = records[r].signatures;
          for (std::size_t s = 0; s < sigs.size(); ++s) {
            MatchCandidate c{box, textured ? std::clamp(dot(sigs[s].templ, window), -1.0, 1.0) : 0.0, scale, s};
            if (!best[r] || better_candidate(c, *best[r])) best[r] = c;
          }
        }
      }
    }
  }
  if (!any_scale_fits) {
    throw Error(ErrorKind::WindowLargerThanFrame, "no scan scale fits a " + std::to_string(frame.width) + "x" +
                                                      std::to_string(frame.height) + " frame");
  }
  return best;
}

/// Highest-scoring window for one device, or nullopt below cfg.threshold.
inline std::optional<MatchCandidate> match_device(const GrayFrame& frame, const registry::DeviceRecord& record,
                                                  const ScanConfig& cfg) {
  auto best = best_candidates(frame, {record}, cfg);
  if (best[0] && best[0]->score >= cfg.threshold) return best[0];
  return std::nullopt;
}

/// Recognitions above threshold, best first (ties by device id), capped at
/// cfg.max_simultaneous.
inline std::vector<Recognition> scan_frame(const GrayFrame& frame, const std::vector<registry::DeviceRecord>& records,
                                           const ScanConfig& cfg) {
  if (records.empty()) {
    validate_frame(frame);
    return {};
  }
  std::vector<std::optional<MatchCandidate>> best;
  try {
    best = best_candidates(frame, records, cfg);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::WindowLargerThanFrame) throw;
    return {};
  }
  std::vector<Recognition> out;
  for (std::size_t r = 0; r < records.size(); ++r) {
    if (best[r] && best[r]->score >= cfg.threshold) out.push_back({records[r].device_id, *best[r]});
  }
  std::sort(out.begin(), out.end(), [](const Recognition& a, const Recognition& b) {
    if (a.best.score != b.best.score) return a.best.score > b.best.score;
    return a.device_id < b.device_id;
  });
  if (out.size() > static_cast<std::size_t>(cfg.max_simultaneous)) out.resize(static_cast<std::size_t>(cfg.max_simultaneous));
  return out;
}

}  // namespace arcon::recognizer
