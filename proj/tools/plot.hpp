#pragma once

#include <vector>

#include "cridiff/image.hpp"
#include "cridiff/png_io.hpp"

namespace cridiff::plot {

/// Polylines over a shared autoscaled frame, one colour per series.
png::RgbImage line_chart(const std::vector<std::vector<double>>& series, int width, int height);

/// One bar per value on a [lo, hi] vertical scale.
png::RgbImage bar_chart(const std::vector<double>& values, double lo, double hi, int width, int height);

/// Tiles gray maps (values clamped to [0, 1]) row by row, each pixel scaled
/// up by `zoom`, with a 2-pixel white gutter.
png::RgbImage tile_grid(const std::vector<std::vector<RealMap>>& rows, int zoom);

}  // namespace cridiff::plot
