#pragma once

// Synthetic images, a frame compositor and brute-force oracles shared by the
// unit and acceptance suites. The oracles deliberately avoid the library's
// resampling and scoring code paths.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "arcon/core/image.hpp"
#include "arcon/core/util.hpp"

namespace arcon::testing {

inline GrayFrame uniform(int w, int h, std::uint8_t v) { return GrayFrame(w, h, v); }

inline GrayFrame hramp(int w, int h) {
  GrayFrame f(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) f.at(x, y) = static_cast<std::uint8_t>(x % 256);
  return f;
}

inline GrayFrame hramp_decreasing(int w, int h) {
  GrayFrame f(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) f.at(x, y) = static_cast<std::uint8_t>(255 - x % 256);
  return f;
}

inline GrayFrame checkerboard(int w, int h, int block) {
  GrayFrame f(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) f.at(x, y) = ((x / block + y / block) % 2) ? 255 : 0;
  return f;
}

inline GrayFrame noise(int w, int h, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> d(0, 255);
  GrayFrame f(w, h);
  for (auto& p : f.pixels) p = static_cast<std::uint8_t>(d(rng));
  return f;
}

/// Smooth-ish textured "device photo": random rectangles over a random
/// gradient. Distinct seeds give weakly correlated images.
inline GrayFrame device_image(int w, int h, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double gx = u(rng) * 2 - 1, gy = u(rng) * 2 - 1;
  std::vector<double> v(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) v[static_cast<std::size_t>(y) * w + x] = 128 + 40 * (gx * x / w + gy * y / h);
  for (int k = 0; k < 14; ++k) {
    const int x0 = static_cast<int>(u(rng) * w), y0 = static_cast<int>(u(rng) * h);
    const int rw = 3 + static_cast<int>(u(rng) * w / 2.5), rh = 3 + static_cast<int>(u(rng) * h / 2.5);
    const double a = (u(rng) * 2 - 1) * 110;
    for (int y = y0; y < std::min(h, y0 + rh); ++y)
      for (int x = x0; x < std::min(w, x0 + rw); ++x) v[static_cast<std::size_t>(y) * w + x] += a;
  }
  GrayFrame f(w, h);
  for (std::size_t i = 0; i < v.size(); ++i) f.pixels[i] = static_cast<std::uint8_t>(std::clamp(v[i], 0.0, 255.0));
  return f;
}

/// Low-contrast background texture for composited frames.
inline GrayFrame background(int w, int h, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> d(-12, 12);
  GrayFrame f(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      f.at(x, y) = static_cast<std::uint8_t>(std::clamp(110 + (x + y) / 16 + d(rng), 0, 255));
  return f;
}

/// Perturbs every pixel by uniform noise in [-amp, amp].
inline GrayFrame jitter(const GrayFrame& src, int amp, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> d(-amp, amp);
  GrayFrame f = src;
  for (auto& p : f.pixels) p = static_cast<std::uint8_t>(std::clamp(int(p) + d(rng), 0, 255));
  return f;
}

struct Plant {
  std::string device_id;
  Rect box;
};

/// Records what was pasted where; serializes to the sidecar ground-truth file.
struct Compositor {
  GrayFrame frame;
  std::vector<Plant> plants;

  void plant(const std::string& id, const GrayFrame& patch, int x, int y) {
    paste(frame, patch, x, y);
    plants.push_back({id, Rect{x, y, patch.width, patch.height}});
  }

  Json ground_truth() const {
    Json arr = Json::array();
    for (const auto& p : plants)
      arr.push_back({{"device_id", p.device_id}, {"x", p.box.x}, {"y", p.box.y}, {"w", p.box.w}, {"h", p.box.h}});
    return Json{{"plants", arr}};
  }
};

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

/// Detail score by direct per-pixel summation in double precision.
inline double detail_oracle(const GrayFrame& f) {
  double sum = 0;
  long n = 0;
  for (int y = 1; y <= f.height - 2; ++y) {
    for (int x = 1; x <= f.width - 2; ++x) {
      sum += std::fabs(double(f.at(x + 1, y)) - f.at(x, y)) + std::fabs(double(f.at(x, y + 1)) - f.at(x, y));
      ++n;
    }
  }
  return sum / n;
}

/// Box-average by replication: every source pixel is expanded to an
/// out_w x out_h block, giving a (w*out_w) x (h*out_h) grid in which each
/// output cell is exactly a w x h block. Slow; use on small inputs.
inline std::vector<double> resample_oracle_replicated(const GrayFrame& f, Rect r, int out_w, int out_h) {
  std::vector<double> out(static_cast<std::size_t>(out_w) * out_h, 0.0);
  for (int j = 0; j < out_h; ++j) {
    for (int i = 0; i < out_w; ++i) {
      double acc = 0;
      for (int gy = j * r.h; gy < (j + 1) * r.h; ++gy) {
        for (int gx = i * r.w; gx < (i + 1) * r.w; ++gx) {
          acc += f.at(r.x + gx / out_w, r.y + gy / out_h);
        }
      }
      out[static_cast<std::size_t>(j) * out_w + i] = acc / (double(r.w) * r.h);
    }
  }
  return out;
}

/// Box-average by real-valued area overlap: output cell i covers
/// [i*w/out_w, (i+1)*w/out_w) in source coordinates.
inline std::vector<double> resample_oracle(const GrayFrame& f, Rect r, int out_w, int out_h) {
  std::vector<double> out(static_cast<std::size_t>(out_w) * out_h, 0.0);
  const double sx = double(r.w) / out_w, sy = double(r.h) / out_h;
  for (int j = 0; j < out_h; ++j) {
    const double y0 = j * sy, y1 = (j + 1) * sy;
    for (int i = 0; i < out_w; ++i) {
      const double x0 = i * sx, x1 = (i + 1) * sx;
      double acc = 0;
      for (int py = int(std::floor(y0)); py < r.h && py < y1; ++py) {
        const double oy = std::min(y1, py + 1.0) - std::max(y0, double(py));
        if (oy <= 0) continue;
        for (int px = int(std::floor(x0)); px < r.w && px < x1; ++px) {
          const double ox = std::min(x1, px + 1.0) - std::max(x0, double(px));
          if (ox <= 0) continue;
          acc += ox * oy * f.at(r.x + px, r.y + py);
        }
      }
      out[static_cast<std::size_t>(j) * out_w + i] = acc / (sx * sy);
    }
  }
  return out;
}

/// Textbook NCC of two equal-length vectors: covariance over the product of
/// standard deviations. Zero-variance windows score 0.
inline double ncc_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va < 1e-12 || vb < 1e-12) return 0.0;
  return cov / std::sqrt(va * vb);
}

struct OracleHit {
  int x = -1;
  int y = -1;
  double score = -2.0;
};

/// Exhaustive single-scale, stride-1 search. Scans in (y, x) order and
/// keeps the first maximum, which is the documented tie-break.
inline OracleHit exhaustive_match(const GrayFrame& frame, const GrayFrame& source, int side) {
  const auto templ = resample_oracle(source, Rect{0, 0, source.width, source.height}, 32, 32);
  OracleHit best;
  for (int y = 0; y + side <= frame.height; ++y) {
    for (int x = 0; x + side <= frame.width; ++x) {
      const double s = ncc_oracle(templ, resample_oracle(frame, Rect{x, y, side, side}, 32, 32));
      if (s > best.score) best = {x, y, s};
    }
  }
  return best;
}

}  // namespace arcon::testing
