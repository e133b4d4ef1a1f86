#pragma once

// Slow, obviously-correct reference implementations used only by tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "cridiff/image.hpp"

namespace oracle {

using cridiff::Mask;
using cridiff::RealMap;

struct Point {
  int r;
  int c;
};

/// Random binary mask; `density` is the foreground probability.
inline Mask random_mask(int h, int w, std::mt19937_64& rng, double density) {
  std::bernoulli_distribution fg(density);
  Mask m(h, w);
  for (auto& v : m.pixels()) v = fg(rng) ? 1 : 0;
  return m;
}

/// Random blob: a union of a few random discs, so masks have interiors.
inline Mask random_blob_mask(int h, int w, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count(1, 3);
  std::uniform_real_distribution<double> row(0, h - 1), col(0, w - 1), rad(1.0, std::max(1.5, std::min(h, w) / 3.0));
  Mask m(h, w);
  const int n = count(rng);
  for (int k = 0; k < n; ++k) {
    const double cr = row(rng), cc = col(rng), rr = rad(rng);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        if ((r - cr) * (r - cr) + (c - cc) * (c - cc) <= rr * rr) m(r, c) = 1;
      }
    }
  }
  return m;
}

/// Distance from every foreground pixel to the nearest background pixel of
/// the mask surrounded by a one-pixel background frame, by scanning every
/// pixel pair.
inline RealMap distance_transform(const Mask& mask) {
  const int h = mask.height(), w = mask.width();
  const auto background = [&](int r, int c) {
    return r < 0 || c < 0 || r >= h || c >= w || mask(r, c) == 0;
  };
  RealMap out(h, w, 0.0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (background(r, c)) continue;
      double best = std::numeric_limits<double>::infinity();
      for (int br = -1; br <= h; ++br) {
        for (int bc = -1; bc <= w; ++bc) {
          if (!background(br, bc)) continue;
          const double d2 = double(r - br) * (r - br) + double(c - bc) * (c - bc);
          best = std::min(best, d2);
        }
      }
      out(r, c) = std::sqrt(best);
    }
  }
  return out;
}

/// Foreground pixels touching background or the image edge (4-neighbourhood).
inline std::vector<Point> boundary(const Mask& m) {
  std::vector<Point> out;
  for (int r = 0; r < m.height(); ++r) {
    for (int c = 0; c < m.width(); ++c) {
      if (!m(r, c)) continue;
      const bool edge = r == 0 || c == 0 || r == m.height() - 1 || c == m.width() - 1 || !m(r - 1, c) ||
                        !m(r + 1, c) || !m(r, c - 1) || !m(r, c + 1);
      if (edge) out.push_back({r, c});
    }
  }
  return out;
}

inline std::vector<double> directed(const std::vector<Point>& from, const std::vector<Point>& to) {
  std::vector<double> d;
  for (const auto& a : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& b : to) best = std::min(best, std::hypot(double(a.r - b.r), double(a.c - b.c)));
    d.push_back(best);
  }
  return d;
}

/// All-pairs symmetric Hausdorff distance between boundary sets (both nonempty).
inline double hausdorff(const Mask& a, const Mask& b) {
  const auto ba = boundary(a), bb = boundary(b);
  const auto ab = directed(ba, bb), ba2 = directed(bb, ba);
  return std::max(*std::max_element(ab.begin(), ab.end()), *std::max_element(ba2.begin(), ba2.end()));
}

/// Mean of the two directed mean surface distances (both nonempty).
inline double average_surface_distance(const Mask& a, const Mask& b) {
  const auto ba = boundary(a), bb = boundary(b);
  const auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  return 0.5 * (mean(directed(ba, bb)) + mean(directed(bb, ba)));
}

inline int count(const Mask& m) {
  int n = 0;
  for (auto v : m.pixels()) n += v != 0;
  return n;
}

inline int overlap(const Mask& a, const Mask& b) {
  int n = 0;
  for (int r = 0; r < a.height(); ++r) {
    for (int c = 0; c < a.width(); ++c) n += a(r, c) && b(r, c);
  }
  return n;
}

}  // namespace oracle
