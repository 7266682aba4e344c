// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <random>

#include "matchkit/error.hpp"
#include "matchkit/image_io.hpp"
#include "test_support.hpp"

using namespace matchkit;

namespace {

double overlap(double a0, double a1, double b0, double b1) {
  return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

std::vector<double> area_oracle(const std::vector<double>& src, std::size_t sw, std::size_t sh,
                                std::size_t dw, std::size_t dh) {
  const double fx = double(sw) / double(dw);
  const double fy = double(sh) / double(dh);
  std::vector<double> out(dw * dh, 0.0);
  for (std::size_t oy = 0; oy < dh; ++oy)
    for (std::size_t ox = 0; ox < dw; ++ox) {
      double acc = 0.0;
      for (std::size_t y = 0; y < sh; ++y)
        for (std::size_t x = 0; x < sw; ++x) {
          const double w = overlap(ox * fx, (ox + 1) * fx, double(x), x + 1.0) *
                           overlap(oy * fy, (oy + 1) * fy, double(y), y + 1.0);
          acc += w * src[y * sw + x];
        }
      out[oy * dw + ox] = acc / (fx * fy);
    }
  return out;
}

}  // namespace

TEST(Png, RoundTripIsLossless) {
  test::TempDir dir;
  GrayImage img{7, 5, {}};
  for (std::size_t i = 0; i < 35; ++i) img.pixels.push_back(static_cast<std::uint8_t>(i * 7));
  write_png_gray(img, dir / "a.png");
  const GrayImage back = read_png_gray(dir / "a.png");
  EXPECT_EQ(back.width, 7u);
  EXPECT_EQ(back.height, 5u);
  EXPECT_EQ(back.pixels, img.pixels);
}

TEST(Png, ErrorsNameThePath) {
  test::TempDir dir;
  {
    std::ofstream(dir / "junk.png") << "definitely not png data";
  }
  try {
    read_png_gray(dir / "junk.png");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("junk.png"), std::string::npos);
  }
  EXPECT_THROW(read_png_gray(dir / "missing.png"), DataError);
}

TEST(ResizeArea, IntegerFactorAveragesBlocks) {
  const std::vector<double> src{1, 3, 5, 7,  //
                                1, 3, 5, 7,  //
                                0, 0, 8, 8,  //
                                0, 4, 8, 8};
  const auto out = resize_area(src, 4, 4, 2, 2);
  EXPECT_EQ(out, (std::vector<double>{2, 6, 1, 8}));
}

TEST(ResizeArea, MatchesOverlapOracle) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  const std::vector<std::array<std::size_t, 4>> cases{
      {105, 105, 28, 28}, {3, 3, 2, 2}, {5, 7, 3, 2}, {4, 4, 4, 4}, {2, 3, 5, 4}};
  for (const auto& [sw, sh, dw, dh] : cases) {
    std::vector<double> src(sw * sh);
    for (double& v : src) v = u(rng);
    const auto got = resize_area(src, sw, sh, dw, dh);
    const auto want = area_oracle(src, sw, sh, dw, dh);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(ResizeArea, PreservesConstantsAndMean) {
  const std::vector<double> flat(105 * 105, 0.25);
  for (double v : resize_area(flat, 105, 105, 28, 28)) EXPECT_NEAR(v, 0.25, 1e-12);
  std::mt19937_64 rng(4);
  std::vector<double> src(30 * 30);
  for (double& v : src) v = std::uniform_real_distribution<double>(0, 1)(rng);
  const auto out = resize_area(src, 30, 30, 7, 7);
  double a = 0, b = 0;
  for (double v : src) a += v;
  for (double v : out) b += v;
  EXPECT_NEAR(a / 900.0, b / 49.0, 1e-12);
}
