// SPDX-License-Identifier: Apache-2.0
#include "matchkit/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <memory>

#include "matchkit/error.hpp"

namespace matchkit {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp png, png_const_charp message) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = message;
  png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

}  // namespace

GrayImage read_png_gray(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw DataError("cannot open image " + path.string());
  png_byte signature[8];
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw DataError("not a PNG file: " + path.string());
  }
  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_fail, png_warn);
  if (!png) throw DataError("libpng initialisation failed for " + path.string());
  png_infop info = png_create_info_struct(png);
  GrayImage image;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("cannot decode " + path.string() + ": " + message);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (depth == 16) png_set_strip_16(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
  }
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
      color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  png_read_update_info(png, info);
  image.width = png_get_image_width(png, info);
  image.height = png_get_image_height(png, info);
  if (png_get_channels(png, info) != 1 || png_get_bit_depth(png, info) != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("unsupported pixel layout in " + path.string());
  }
  image.pixels.resize(image.width * image.height);
  rows.resize(image.height);
  for (std::size_t y = 0; y < image.height; ++y) rows[y] = image.pixels.data() + y * image.width;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

void write_png_gray(const GrayImage& image, const std::filesystem::path& path) {
  if (image.pixels.size() != image.width * image.height || image.width == 0 || image.height == 0) {
    throw DataError("write_png_gray: inconsistent image extents for " + path.string());
  }
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw DataError("cannot create " + path.string());
  std::string message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_fail, png_warn);
  if (!png) throw DataError("libpng initialisation failed for " + path.string());
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows(image.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("cannot encode " + path.string() + ": " + message);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < image.height; ++y) {
    rows[y] = const_cast<png_bytep>(image.pixels.data() + y * image.width);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

namespace {

// weights[o] lists (source index, coverage) for output cell o along one axis.
std::vector<std::vector<std::pair<std::size_t, double>>> coverage(std::size_t src, std::size_t dst) {
  std::vector<std::vector<std::pair<std::size_t, double>>> out(dst);
  const double ratio = static_cast<double>(src) / static_cast<double>(dst);
  for (std::size_t o = 0; o < dst; ++o) {
    const double lo = static_cast<double>(o) * ratio;
    const double hi = static_cast<double>(o + 1) * ratio;
    for (std::size_t s = static_cast<std::size_t>(lo); s < src && static_cast<double>(s) < hi; ++s) {
      const double overlap = std::min(hi, static_cast<double>(s + 1)) - std::max(lo, static_cast<double>(s));
      if (overlap > 0.0) out[o].emplace_back(s, overlap / ratio);
    }
  }
  return out;
}

}  // namespace

std::vector<double> resize_area(std::span<const double> src, std::size_t src_w, std::size_t src_h,
                                std::size_t dst_w, std::size_t dst_h) {
  if (src.size() != src_w * src_h || dst_w == 0 || dst_h == 0) {
    throw DataError("resize_area: inconsistent extents");
  }
  const auto cx = coverage(src_w, dst_w);
  const auto cy = coverage(src_h, dst_h);
  std::vector<double> rows(src_h * dst_w, 0.0);
  for (std::size_t y = 0; y < src_h; ++y) {
    for (std::size_t x = 0; x < dst_w; ++x) {
      double acc = 0.0;
      for (auto [s, w] : cx[x]) acc += w * src[y * src_w + s];
      rows[y * dst_w + x] = acc;
    }
  }
  std::vector<double> out(dst_w * dst_h, 0.0);
  for (std::size_t y = 0; y < dst_h; ++y) {
    for (std::size_t x = 0; x < dst_w; ++x) {
      double acc = 0.0;
      for (auto [s, w] : cy[y]) acc += w * rows[s * dst_w + x];
      out[y * dst_w + x] = acc;
    }
  }
  return out;
}

}  // namespace matchkit
