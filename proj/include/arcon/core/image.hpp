#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "arcon/core/error.hpp"

namespace arcon {

inline constexpr int kMinFrameWidth = 9;
inline constexpr int kMinFrameHeight = 8;

/// Row-major 8-bit grayscale image.
struct GrayFrame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayFrame() = default;
  GrayFrame(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w > 0 && h > 0 ? w * h : 0), fill) {}
  GrayFrame(int w, int h, std::vector<std::uint8_t> px) : width(w), height(h), pixels(std::move(px)) {}

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const GrayFrame&, const GrayFrame&) = default;
};

struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  friend bool operator==(const Rect&, const Rect&) = default;
};

inline double iou(const Rect& a, const Rect& b) {
  const int x0 = std::max(a.x, b.x);
  const int y0 = std::max(a.y, b.y);
  const int x1 = std::min(a.x + a.w, b.x + b.w);
  const int y1 = std::min(a.y + a.h, b.y + b.h);
  const double inter = (x1 > x0 && y1 > y0) ? double(x1 - x0) * double(y1 - y0) : 0.0;
  const double uni = double(a.w) * a.h + double(b.w) * b.h - inter;
  return uni > 0 ? inter / uni : 0.0;
}

inline void validate_frame(const GrayFrame& f) {
  if (f.width < kMinFrameWidth || f.height < kMinFrameHeight) {
    throw Error(ErrorKind::MalformedImage, "frame must be at least 9x8, got " + std::to_string(f.width) +
                                               "x" + std::to_string(f.height));
  }
  if (f.pixels.size() != static_cast<std::size_t>(f.width) * static_cast<std::size_t>(f.height)) {
    throw Error(ErrorKind::MalformedImage, "pixel count " + std::to_string(f.pixels.size()) +
                                               " does not match " + std::to_string(f.width) + "x" +
                                               std::to_string(f.height));
  }
}

// Copy `src` into `dst` with its top-left corner at (x, y). Clipped at the
// destination bounds.
inline void paste(GrayFrame& dst, const GrayFrame& src, int x, int y) {
  for (int r = 0; r < src.height; ++r) {
    const int dy = y + r;
    if (dy < 0 || dy >= dst.height) continue;
    for (int c = 0; c < src.width; ++c) {
      const int dx = x + c;
      if (dx < 0 || dx >= dst.width) continue;
      dst.at(dx, dy) = src.at(c, r);
    }
  }
}

// ---------------------------------------------------------------------------
// Box-average resampling
// ---------------------------------------------------------------------------

/// Area weights mapping `src_len` source pixels onto `dst_len` output cells.
/// Output cell i spans [i*src_len, (i+1)*src_len) and source pixel p spans
/// [p*dst_len, (p+1)*dst_len) on a common integer axis; the weight is the
/// overlap length. Weights of one cell sum to `src_len`.
struct AxisWeights {
  struct Tap {
    int offset;
    std::int64_t weight;
  };
  std::vector<std::vector<Tap>> cells;

  AxisWeights() = default;
  AxisWeights(int src_len, int dst_len) : cells(static_cast<std::size_t>(dst_len)) {
    const std::int64_t s = src_len;
    const std::int64_t d = dst_len;
    for (std::int64_t i = 0; i < d; ++i) {
      const std::int64_t lo = i * s;
      const std::int64_t hi = (i + 1) * s;
      for (std::int64_t p = lo / d; p < s && p * d < hi; ++p) {
        const std::int64_t ov = std::min(hi, (p + 1) * d) - std::max(lo, p * d);
        if (ov > 0) cells[static_cast<std::size_t>(i)].push_back({static_cast<int>(p), ov});
      }
    }
  }
};

/// Integer cell sums of a box-averaged region; value(i) = sums[i] / denominator.
struct ResampledSums {
  int width = 0;
  int height = 0;
  std::vector<std::int64_t> sums;
  std::int64_t denominator = 1;

  double value(std::size_t i) const { return static_cast<double>(sums[i]) / static_cast<double>(denominator); }

  std::vector<double> values() const {
    std::vector<double> out(sums.size());
    for (std::size_t i = 0; i < sums.size(); ++i) out[i] = value(i);
    return out;
  }
};

/// Box-average `region` of `frame` onto an out_w x out_h grid using
/// precomputed axis weights.
inline ResampledSums box_resample_sums(const GrayFrame& frame, const Rect& region, const AxisWeights& wx,
                                       const AxisWeights& wy) {
  const int out_w = static_cast<int>(wx.cells.size());
  const int out_h = static_cast<int>(wy.cells.size());
  ResampledSums r;
  r.width = out_w;
  r.height = out_h;
  r.denominator = static_cast<std::int64_t>(region.w) * region.h;
  r.sums.assign(static_cast<std::size_t>(out_w) * out_h, 0);

  // Horizontal pass: rows of the region -> out_w columns.
  std::vector<std::int64_t> rows(static_cast<std::size_t>(region.h) * out_w, 0);
  for (int ry = 0; ry < region.h; ++ry) {
    const std::uint8_t* line = frame.pixels.data() + static_cast<std::size_t>(region.y + ry) * frame.width + region.x;
    std::int64_t* dst = rows.data() + static_cast<std::size_t>(ry) * out_w;
    for (int c = 0; c < out_w; ++c) {
      std::int64_t acc = 0;
      for (const auto& tap : wx.cells[static_cast<std::size_t>(c)]) acc += tap.weight * line[tap.offset];
      dst[c] = acc;
    }
  }
  // Vertical pass.
  for (int r_ = 0; r_ < out_h; ++r_) {
    std::int64_t* dst = r.sums.data() + static_cast<std::size_t>(r_) * out_w;
    for (const auto& tap : wy.cells[static_cast<std::size_t>(r_)]) {
      const std::int64_t* src = rows.data() + static_cast<std::size_t>(tap.offset) * out_w;
      for (int c = 0; c < out_w; ++c) dst[c] += tap.weight * src[c];
    }
  }
  return r;
}

inline ResampledSums box_resample_sums(const GrayFrame& frame, const Rect& region, int out_w, int out_h) {
  return box_resample_sums(frame, region, AxisWeights(region.w, out_w), AxisWeights(region.h, out_h));
}

inline std::vector<double> box_resample(const GrayFrame& frame, const Rect& region, int out_w, int out_h) {
  return box_resample_sums(frame, region, out_w, out_h).values();
}

inline std::vector<double> box_resample(const GrayFrame& frame, int out_w, int out_h) {
  return box_resample(frame, Rect{0, 0, frame.width, frame.height}, out_w, out_h);
}

// ---------------------------------------------------------------------------
// Binary PGM (P5, maxval 255)
// ---------------------------------------------------------------------------

namespace pgm_detail {

inline void skip_space_and_comments(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
    } else if (c != EOF && std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

inline int read_header_int(std::istream& in) {
  skip_space_and_comments(in);
  int v = -1;
  if (!(in >> v)) throw Error(ErrorKind::MalformedImage, "bad PGM header");
  return v;
}

}  // namespace pgm_detail

inline GrayFrame decode_pgm(std::string_view bytes) {
  std::istringstream in{std::string(bytes)};
  std::string magic;
  in >> magic;
  if (magic != "P5") throw Error(ErrorKind::MalformedImage, "not a binary PGM (P5)");
  const int w = pgm_detail::read_header_int(in);
  const int h = pgm_detail::read_header_int(in);
  const int maxval = pgm_detail::read_header_int(in);
  if (maxval != 255) throw Error(ErrorKind::MalformedImage, "PGM maxval must be 255");
  if (w <= 0 || h <= 0 || w > 1 << 15 || h > 1 << 15) throw Error(ErrorKind::MalformedImage, "bad PGM dimensions");
  in.get();  // single whitespace before raster
  GrayFrame f(w, h);
  in.read(reinterpret_cast<char*>(f.pixels.data()), static_cast<std::streamsize>(f.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(f.pixels.size())) {
    throw Error(ErrorKind::MalformedImage, "PGM raster truncated");
  }
  validate_frame(f);
  return f;
}

inline std::string encode_pgm(const GrayFrame& f) {
  std::string out = "P5\n" + std::to_string(f.width) + " " + std::to_string(f.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(f.pixels.data()), f.pixels.size());
  return out;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline GrayFrame read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file_bytes(path)); }

inline void write_pgm(const std::filesystem::path& path, const GrayFrame& f) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  const std::string bytes = encode_pgm(f);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::IoFailure, "short write to " + path.string());
}

}  // namespace arcon
