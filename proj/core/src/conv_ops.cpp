// SPDX-License-Identifier: Apache-2.0
#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <string>

#include "autograd.hpp"
#include "matchkit/error.hpp"
#include "matchkit/ops.hpp"

namespace matchkit {

using detail::input_grad;
using detail::input_value;
using detail::make_result;
using detail::Node;
using detail::tracked;

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMajor>;
using ConstMatMap = Eigen::Map<const RowMajor>;

constexpr std::size_t kTaps = 9;

// cols[(c*9 + ky*3 + kx), y*W + x] = in[c, y+ky-1, x+kx-1] (zero outside).
void im2col(const double* in, std::size_t c_in, std::size_t h, std::size_t w, double* cols) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        double* dst = cols + (c * kTaps + ky * 3 + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y + ky) - 1;
          for (std::size_t x = 0; x < w; ++x) {
            const long sx = static_cast<long>(x + kx) - 1;
            const bool inside = sy >= 0 && sy < static_cast<long>(h) && sx >= 0 &&
                                sx < static_cast<long>(w);
            dst[y * w + x] = inside ? in[(c * h + static_cast<std::size_t>(sy)) * w +
                                         static_cast<std::size_t>(sx)]
                                    : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* cols, std::size_t c_in, std::size_t h, std::size_t w, double* out) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const double* src = cols + (c * kTaps + ky * 3 + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y + ky) - 1;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          for (std::size_t x = 0; x < w; ++x) {
            const long sx = static_cast<long>(x + kx) - 1;
            if (sx < 0 || sx >= static_cast<long>(w)) continue;
            out[(c * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)] +=
                src[y * w + x];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel) {
  if (input.rank() != 4 || kernel.rank() != 4) {
    throw ShapeError("conv2d: expected input[N,C,H,W] and kernel[F,C,3,3], got " +
                     shape_str(input.shape()) + " and " + shape_str(kernel.shape()));
  }
  const std::size_t n = input.dim(0);
  const std::size_t c = input.dim(1);
  const std::size_t h = input.dim(2);
  const std::size_t w = input.dim(3);
  const std::size_t f = kernel.dim(0);
  if (kernel.dim(2) != 3 || kernel.dim(3) != 3) {
    throw ShapeError("conv2d: kernel must be 3x3, got " + shape_str(kernel.shape()));
  }
  if (kernel.dim(1) != c) {
    throw ShapeError("conv2d: kernel channels " + std::to_string(kernel.dim(1)) +
                     " do not match input channels " + std::to_string(c));
  }
  const std::size_t hw = h * w;
  const std::size_t patch = c * kTaps;
  std::vector<double> cols(n * patch * hw);
  std::vector<double> out(n * f * hw);
  ConstMatMap k(kernel.data().data(), f, patch);
  for (std::size_t i = 0; i < n; ++i) {
    double* col = cols.data() + i * patch * hw;
    im2col(input.data().data() + i * c * hw, c, h, w, col);
    MatMap(out.data() + i * f * hw, f, hw).noalias() = k * ConstMatMap(col, patch, hw);
  }
  return make_result(
      "conv2d", {n, f, h, w}, std::move(out), {input, kernel},
      [n, c, h, w, f, hw, patch, cols = std::move(cols)](Node& self) {
        const auto& kv = input_value(self, 1);
        ConstMatMap k(kv.data(), f, patch);
        std::vector<double> dcol(patch * hw);
        for (std::size_t i = 0; i < n; ++i) {
          ConstMatMap g(self.grad.data() + i * f * hw, f, hw);
          ConstMatMap col(cols.data() + i * patch * hw, patch, hw);
          if (tracked(self, 1)) {
            MatMap(input_grad(self, 1).data(), f, patch).noalias() += g * col.transpose();
          }
          if (tracked(self, 0)) {
            MatMap(dcol.data(), patch, hw).noalias() = k.transpose() * g;
            col2im(dcol.data(), c, h, w, input_grad(self, 0).data() + i * c * hw);
          }
        }
      });
}

Tensor maxpool2x2(const Tensor& input, PoolRounding rounding) {
  if (input.rank() != 4) {
    throw ShapeError("maxpool2x2: expected [N,C,H,W], got " + shape_str(input.shape()));
  }
  const std::size_t n = input.dim(0);
  const std::size_t c = input.dim(1);
  const std::size_t h = input.dim(2);
  const std::size_t w = input.dim(3);
  const bool ceil = rounding == PoolRounding::ceil;
  const std::size_t oh = ceil ? (h + 1) / 2 : h / 2;
  const std::size_t ow = ceil ? (w + 1) / 2 : w / 2;
  if (oh == 0 || ow == 0) {
    throw ShapeError("maxpool2x2: floor rounding on " + shape_str(input.shape()) +
                     " leaves no output");
  }
  std::vector<double> out(n * c * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  auto xv = input.data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const double* src = xv.data() + plane * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_at = 0;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          const std::size_t sy = 2 * y + dy;
          if (sy >= h) continue;
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t sx = 2 * x + dx;
            if (sx >= w) continue;
            const std::size_t at = sy * w + sx;
            if (src[at] > best) {
              best = src[at];
              best_at = at;
            }
          }
        }
        const std::size_t o = (plane * oh + y) * ow + x;
        out[o] = best;
        argmax[o] = plane * h * w + best_at;
      }
    }
  }
  return make_result("maxpool2x2", {n, c, oh, ow}, std::move(out), {input},
                     [argmax = std::move(argmax)](Node& self) {
                       auto& g = input_grad(self, 0);
                       for (std::size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += self.grad[o];
                     });
}

BatchNormStats BatchNormStats::identity(std::size_t channels) {
  return BatchNormStats{std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)};
}

namespace {

struct ChannelLayout {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t inner = 1;
};

ChannelLayout channel_layout(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                             std::size_t stat_channels) {
  if (x.rank() != 2 && x.rank() != 4) {
    throw ShapeError("batchnorm: expected [N,C] or [N,C,H,W], got " + shape_str(x.shape()));
  }
  ChannelLayout l;
  l.batch = x.dim(0);
  l.channels = x.dim(1);
  if (x.rank() == 4) l.inner = x.dim(2) * x.dim(3);
  if (gamma.shape() != Shape{l.channels} || beta.shape() != Shape{l.channels} ||
      stat_channels != l.channels) {
    throw ShapeError("batchnorm: affine/statistics extents do not match " +
                     std::to_string(l.channels) + " channels");
  }
  return l;
}

Tensor batchnorm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      const BatchNormStats& stats, double eps) {
  const ChannelLayout l = channel_layout(x, gamma, beta, stats.mean.size());
  if (stats.var.size() != l.channels) throw ShapeError("batchnorm: running variance extent");
  std::vector<double> invstd(l.channels);
  for (std::size_t ch = 0; ch < l.channels; ++ch) invstd[ch] = 1.0 / std::sqrt(stats.var[ch] + eps);
  std::vector<double> xhat(x.numel());
  std::vector<double> out(x.numel());
  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  for (std::size_t b = 0; b < l.batch; ++b) {
    for (std::size_t ch = 0; ch < l.channels; ++ch) {
      const std::size_t base = (b * l.channels + ch) * l.inner;
      for (std::size_t i = 0; i < l.inner; ++i) {
        xhat[base + i] = (xv[base + i] - stats.mean[ch]) * invstd[ch];
        out[base + i] = gv[ch] * xhat[base + i] + bv[ch];
      }
    }
  }
  return make_result("batchnorm_eval", x.shape(), std::move(out), {x, gamma, beta},
                     [l, invstd = std::move(invstd), xhat = std::move(xhat)](Node& self) {
                       const auto& gv = input_value(self, 1);
                       for (std::size_t b = 0; b < l.batch; ++b) {
                         for (std::size_t ch = 0; ch < l.channels; ++ch) {
                           const std::size_t base = (b * l.channels + ch) * l.inner;
                           for (std::size_t i = 0; i < l.inner; ++i) {
                             const double g = self.grad[base + i];
                             if (tracked(self, 0)) input_grad(self, 0)[base + i] += g * gv[ch] * invstd[ch];
                             if (tracked(self, 1)) input_grad(self, 1)[ch] += g * xhat[base + i];
                             if (tracked(self, 2)) input_grad(self, 2)[ch] += g;
                           }
                         }
                       }
                     });
}

}  // namespace

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 const BatchNormStats& stats, double eps) {
  return batchnorm_eval(x, gamma, beta, stats, eps);
}

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                 Mode mode, double momentum, double eps) {
  if (mode == Mode::eval) return batchnorm_eval(x, gamma, beta, stats, eps);

  const ChannelLayout l = channel_layout(x, gamma, beta, stats.mean.size());
  if (l.batch < 2) {
    throw ShapeError("batchnorm: train mode needs batch size >= 2 (got " +
                     std::to_string(l.batch) + ")");
  }
  const std::size_t count = l.batch * l.inner;
  auto xv = x.data();
  std::vector<double> mu(l.channels, 0.0);
  std::vector<double> var(l.channels, 0.0);
  for (std::size_t b = 0; b < l.batch; ++b) {
    for (std::size_t ch = 0; ch < l.channels; ++ch) {
      const std::size_t base = (b * l.channels + ch) * l.inner;
      for (std::size_t i = 0; i < l.inner; ++i) mu[ch] += xv[base + i];
    }
  }
  for (double& m : mu) m /= static_cast<double>(count);
  for (std::size_t b = 0; b < l.batch; ++b) {
    for (std::size_t ch = 0; ch < l.channels; ++ch) {
      const std::size_t base = (b * l.channels + ch) * l.inner;
      for (std::size_t i = 0; i < l.inner; ++i) {
        const double d = xv[base + i] - mu[ch];
        var[ch] += d * d;
      }
    }
  }
  for (double& v : var) v /= static_cast<double>(count);

  std::vector<double> invstd(l.channels);
  for (std::size_t ch = 0; ch < l.channels; ++ch) invstd[ch] = 1.0 / std::sqrt(var[ch] + eps);
  std::vector<double> xhat(x.numel());
  std::vector<double> out(x.numel());
  auto gv = gamma.data();
  auto bv = beta.data();
  for (std::size_t b = 0; b < l.batch; ++b) {
    for (std::size_t ch = 0; ch < l.channels; ++ch) {
      const std::size_t base = (b * l.channels + ch) * l.inner;
      for (std::size_t i = 0; i < l.inner; ++i) {
        xhat[base + i] = (xv[base + i] - mu[ch]) * invstd[ch];
        out[base + i] = gv[ch] * xhat[base + i] + bv[ch];
      }
    }
  }

  const double unbias = static_cast<double>(count) / static_cast<double>(count - 1);
  for (std::size_t ch = 0; ch < l.channels; ++ch) {
    stats.mean[ch] = (1.0 - momentum) * stats.mean[ch] + momentum * mu[ch];
    stats.var[ch] = (1.0 - momentum) * stats.var[ch] + momentum * var[ch] * unbias;
  }

  return make_result(
      "batchnorm_train", x.shape(), std::move(out), {x, gamma, beta},
      [l, count, invstd = std::move(invstd), xhat = std::move(xhat)](Node& self) {
        const auto& gv = input_value(self, 1);
        std::vector<double> sum_g(l.channels, 0.0);
        std::vector<double> sum_gx(l.channels, 0.0);
        for (std::size_t b = 0; b < l.batch; ++b) {
          for (std::size_t ch = 0; ch < l.channels; ++ch) {
            const std::size_t base = (b * l.channels + ch) * l.inner;
            for (std::size_t i = 0; i < l.inner; ++i) {
              sum_g[ch] += self.grad[base + i];
              sum_gx[ch] += self.grad[base + i] * xhat[base + i];
            }
          }
        }
        if (tracked(self, 1)) {
          auto& g = input_grad(self, 1);
          for (std::size_t ch = 0; ch < l.channels; ++ch) g[ch] += sum_gx[ch];
        }
        if (tracked(self, 2)) {
          auto& g = input_grad(self, 2);
          for (std::size_t ch = 0; ch < l.channels; ++ch) g[ch] += sum_g[ch];
        }
        if (!tracked(self, 0)) return;
        auto& gx = input_grad(self, 0);
        const double inv_count = 1.0 / static_cast<double>(count);
        for (std::size_t b = 0; b < l.batch; ++b) {
          for (std::size_t ch = 0; ch < l.channels; ++ch) {
            const std::size_t base = (b * l.channels + ch) * l.inner;
            const double k = gv[ch] * invstd[ch];
            for (std::size_t i = 0; i < l.inner; ++i) {
              gx[base + i] += k * (self.grad[base + i] - inv_count * sum_g[ch] -
                                   xhat[base + i] * inv_count * sum_gx[ch]);
            }
          }
        }
      });
}

}  // namespace matchkit
