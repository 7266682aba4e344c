// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace matchkit {

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

/// Decodes any PNG to 8-bit grayscale (palette/low bit depths expanded,
/// 16-bit stripped, colour converted, alpha dropped). Throws DataError with
/// the path on failure.
GrayImage read_png_gray(const std::filesystem::path& path);
void write_png_gray(const GrayImage& image, const std::filesystem::path& path);

/// Area-average resampling of a row-major image: every output pixel is the
/// mean of the source region it covers, with fractional edge weights.
std::vector<double> resize_area(std::span<const double> src, std::size_t src_w, std::size_t src_h,
                                std::size_t dst_w, std::size_t dst_h);

}  // namespace matchkit
