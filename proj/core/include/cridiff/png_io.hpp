#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cridiff/image.hpp"

namespace cridiff::png {

/// Reads any PNG and converts it to 8-bit-equivalent grayscale scaled to [0, 1].
GrayImage read_gray(const std::filesystem::path& path);

/// Reads a PNG and binarizes it: pixel > 127 (8-bit scale) becomes 1.
Mask read_mask(const std::filesystem::path& path);

void write_gray8(const std::filesystem::path& path, const GrayImage& image);
void write_mask(const std::filesystem::path& path, const Mask& mask);
/// Soft maps in [0, 1] stored as 16-bit grayscale; values are clamped.
void write_gray16(const std::filesystem::path& path, const RealMap& map);

/// Interleaved RGB, 3 bytes per pixel, row-major.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  RgbImage() = default;
  RgbImage(int h, int w, std::uint8_t fill = 255)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, fill) {}

  void set(int row, int col, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (row < 0 || col < 0 || row >= height || col >= width) return;
    auto* p = &data[(static_cast<std::size_t>(row) * width + col) * 3];
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }
};

void write_rgb(const std::filesystem::path& path, const RgbImage& image);

}  // namespace cridiff::png
