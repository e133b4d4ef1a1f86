#include "cridiff/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace cridiff::png {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return f;
}

// libpng reports errors by longjmp to png_jmpbuf; every object that must
// survive the jump is declared before setjmp.
Image<std::uint16_t> read_gray16_samples(const std::filesystem::path& path) {
  auto file = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_read_struct(png, info, nullptr); }
  } guard{&png, &info};
  if (!info) throw std::runtime_error("png_create_info_struct failed");

  Image<std::uint16_t> out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    throw std::runtime_error("unreadable PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);

  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if ((color & PNG_COLOR_MASK_ALPHA) || png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_set_strip_alpha(png);
  }
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
      color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  if (depth < 16) png_set_expand_16(png);
  png_set_swap(png);  // host little-endian 16-bit samples
  png_read_update_info(png, info);
  if (png_get_channels(png, info) != 1) throw std::runtime_error("unsupported PNG layout: " + path.string());

  out = Image<std::uint16_t>(height, width);
  rows.resize(static_cast<std::size_t>(height));
  for (int r = 0; r < height; ++r) {
    rows[static_cast<std::size_t>(r)] =
        reinterpret_cast<png_bytep>(&out[static_cast<std::size_t>(r) * width]);
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  return out;
}

void write_samples(const std::filesystem::path& path, int height, int width, int depth,
                   int color_type, const std::vector<png_bytep>& rows) {
  auto file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_write_struct(png, info); }
  } guard{&png, &info};
  if (!info) throw std::runtime_error("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(png))) {
    throw std::runtime_error("failed writing PNG " + path.string());
  }

  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), depth,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (depth == 16) png_set_swap(png);
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

GrayImage read_gray(const std::filesystem::path& path) {
  const auto samples = read_gray16_samples(path);
  GrayImage out(samples.height(), samples.width());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out[i] = static_cast<float>(samples[i] / 65535.0);
  }
  return out;
}

Mask read_mask(const std::filesystem::path& path) {
  const auto samples = read_gray16_samples(path);
  Mask out(samples.height(), samples.width());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out[i] = (samples[i] >> 8) > 127 ? 1 : 0;
  }
  return out;
}

void write_gray8(const std::filesystem::path& path, const GrayImage& image) {
  std::vector<std::uint8_t> bytes(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) bytes[i] = to_byte(image[i]);
  std::vector<png_bytep> rows(static_cast<std::size_t>(image.height()));
  for (int r = 0; r < image.height(); ++r) rows[r] = &bytes[static_cast<std::size_t>(r) * image.width()];
  write_samples(path, image.height(), image.width(), 8, PNG_COLOR_TYPE_GRAY, rows);
}

void write_mask(const std::filesystem::path& path, const Mask& mask) {
  std::vector<std::uint8_t> bytes(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) bytes[i] = mask[i] ? 255 : 0;
  std::vector<png_bytep> rows(static_cast<std::size_t>(mask.height()));
  for (int r = 0; r < mask.height(); ++r) rows[r] = &bytes[static_cast<std::size_t>(r) * mask.width()];
  write_samples(path, mask.height(), mask.width(), 8, PNG_COLOR_TYPE_GRAY, rows);
}

void write_gray16(const std::filesystem::path& path, const RealMap& map) {
  std::vector<std::uint16_t> words(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) {
    words[i] = static_cast<std::uint16_t>(std::lround(std::clamp(map[i], 0.0, 1.0) * 65535.0));
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(map.height()));
  for (int r = 0; r < map.height(); ++r) {
    rows[r] = reinterpret_cast<png_bytep>(&words[static_cast<std::size_t>(r) * map.width()]);
  }
  write_samples(path, map.height(), map.width(), 16, PNG_COLOR_TYPE_GRAY, rows);
}

void write_rgb(const std::filesystem::path& path, const RgbImage& image) {
  std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
  auto* base = const_cast<std::uint8_t*>(image.data.data());
  for (int r = 0; r < image.height; ++r) rows[r] = base + static_cast<std::size_t>(r) * image.width * 3;
  write_samples(path, image.height, image.width, 8, PNG_COLOR_TYPE_RGB, rows);
}

}  // namespace cridiff::png
