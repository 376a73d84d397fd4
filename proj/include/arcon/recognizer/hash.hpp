#pragma once

#include <bit>
#include <cstdint>

#include "arcon/core/image.hpp"

namespace arcon::recognizer {

/// 64-bit difference hash. The image is box-averaged onto 9 columns x 8 rows;
/// bit (r, c) for c in 0..7 is set iff cell(r, c) < cell(r, c + 1). Bits are
/// packed row-major with (0, 0) as the least significant bit.
inline std::uint64_t dhash(const GrayFrame& image) {
  validate_frame(image);
  // All cells share one denominator, so comparing integer sums is exact.
  const ResampledSums cells = box_resample_sums(image, Rect{0, 0, image.width, image.height}, 9, 8);
  std::uint64_t h = 0;
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) {
      const auto left = cells.sums[static_cast<std::size_t>(r) * 9 + c];
      const auto right = cells.sums[static_cast<std::size_t>(r) * 9 + c + 1];
      if (left < right) h |= std::uint64_t{1} << (r * 8 + c);
    }
  }
  return h;
}

inline int hamming(std::uint64_t a, std::uint64_t b) { return std::popcount(a ^ b); }

}  // namespace arcon::recognizer
