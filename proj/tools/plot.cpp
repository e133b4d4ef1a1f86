#include "plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace cridiff::plot {

namespace {

using Rgb = std::array<std::uint8_t, 3>;

constexpr std::array<Rgb, 6> kPalette{{{31, 119, 180}, {255, 127, 14}, {44, 160, 44},
                                       {214, 39, 40}, {148, 103, 189}, {140, 86, 75}}};
constexpr int kMargin = 12;

void put(png::RgbImage& img, int r, int c, const Rgb& color) {
  if (r < 0 || c < 0 || r >= img.height || c >= img.width) return;
  auto* px = &img.data[(static_cast<std::size_t>(r) * img.width + c) * 3];
  std::copy(color.begin(), color.end(), px);
}

// Bresenham.
void line(png::RgbImage& img, int r0, int c0, int r1, int c1, const Rgb& color) {
  const int dr = -std::abs(r1 - r0), dc = std::abs(c1 - c0);
  const int sr = r0 < r1 ? 1 : -1, sc = c0 < c1 ? 1 : -1;
  int err = dc + dr;
  while (true) {
    put(img, r0, c0, color);
    if (r0 == r1 && c0 == c1) break;
    const int e2 = 2 * err;
    if (e2 >= dr) { err += dr; c0 += sc; }
    if (e2 <= dc) { err += dc; r0 += sr; }
  }
}

void frame(png::RgbImage& img) {
  const Rgb axis{0, 0, 0};
  const int bottom = img.height - kMargin, right = img.width - kMargin;
  line(img, kMargin, kMargin, bottom, kMargin, axis);
  line(img, bottom, kMargin, bottom, right, axis);
}

}  // namespace

png::RgbImage line_chart(const std::vector<std::vector<double>>& series, int width, int height) {
  if (width <= 2 * kMargin || height <= 2 * kMargin) throw std::invalid_argument("plot area too small");
  png::RgbImage img(height, width);
  frame(img);
  double lo = INFINITY, hi = -INFINITY;
  std::size_t longest = 0;
  for (const auto& s : series) {
    for (double v : s) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    longest = std::max(longest, s.size());
  }
  if (longest < 2 || !(hi >= lo)) return img;
  if (hi == lo) hi = lo + 1.0;
  const double span_x = static_cast<double>(longest - 1);
  const int plot_w = width - 2 * kMargin - 1, plot_h = height - 2 * kMargin - 1;
  const auto col = [&](std::size_t i) { return kMargin + 1 + static_cast<int>(std::lround(i / span_x * plot_w)); };
  const auto row = [&](double v) { return height - kMargin - 1 - static_cast<int>(std::lround((v - lo) / (hi - lo) * plot_h)); };
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    for (std::size_t i = 1; i < s.size(); ++i) {
      if (!std::isfinite(s[i - 1]) || !std::isfinite(s[i])) continue;
      line(img, row(s[i - 1]), col(i - 1), row(s[i]), col(i), kPalette[k % kPalette.size()]);
    }
  }
  return img;
}

png::RgbImage bar_chart(const std::vector<double>& values, double lo, double hi, int width, int height) {
  if (!(hi > lo)) throw std::invalid_argument("bar chart needs hi > lo");
  png::RgbImage img(height, width);
  frame(img);
  if (values.empty()) return img;
  const double slot = static_cast<double>(width - 2 * kMargin - 1) / static_cast<double>(values.size());
  const int plot_h = height - 2 * kMargin - 1;
  for (std::size_t k = 0; k < values.size(); ++k) {
    const double v = std::clamp(values[k], lo, hi);
    const int top = height - kMargin - 1 - static_cast<int>(std::lround((v - lo) / (hi - lo) * plot_h));
    const int c0 = kMargin + 1 + static_cast<int>(std::lround(k * slot + 0.15 * slot));
    const int c1 = kMargin + 1 + static_cast<int>(std::lround((k + 1) * slot - 0.15 * slot));
    for (int r = top; r < height - kMargin; ++r) {
      for (int c = c0; c <= std::max(c0, c1 - 1); ++c) put(img, r, c, kPalette[k % kPalette.size()]);
    }
  }
  return img;
}

png::RgbImage tile_grid(const std::vector<std::vector<RealMap>>& rows, int zoom) {
  constexpr int gutter = 2;
  if (zoom < 1) throw std::invalid_argument("zoom must be >= 1");
  int tile_h = 0, tile_w = 0;
  std::size_t cols = 0;
  for (const auto& r : rows) {
    cols = std::max(cols, r.size());
    for (const auto& t : r) {
      tile_h = std::max(tile_h, t.height());
      tile_w = std::max(tile_w, t.width());
    }
  }
  const int height = static_cast<int>(rows.size()) * (tile_h * zoom + gutter) + gutter;
  const int width = static_cast<int>(cols) * (tile_w * zoom + gutter) + gutter;
  png::RgbImage img(height, width);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      const auto& t = rows[i][j];
      const int r0 = gutter + static_cast<int>(i) * (tile_h * zoom + gutter);
      const int c0 = gutter + static_cast<int>(j) * (tile_w * zoom + gutter);
      for (int r = 0; r < t.height() * zoom; ++r) {
        for (int c = 0; c < t.width() * zoom; ++c) {
          const auto v = static_cast<std::uint8_t>(std::lround(std::clamp(t(r / zoom, c / zoom), 0.0, 1.0) * 255.0));
          put(img, r0 + r, c0 + c, {v, v, v});
        }
      }
    }
  }
  return img;
}

}  // namespace cridiff::plot
