// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "matchkit/tensor.hpp"

namespace matchkit {

inline constexpr double kCosineEps = 1e-8;
inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kLogClamp = 1e-12;

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

/// x[m,n] + bias[n] on every row.
Tensor add_row(const Tensor& x, const Tensor& bias);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
/// Natural log; requires strictly positive input.
Tensor log(const Tensor& x);

/// a[m,n] . b[n,p]
Tensor matmul(const Tensor& a, const Tensor& b);
/// a[m,n] . b[p,n]^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
/// Rows [begin, end) along axis 0.
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
/// Row i of a rank-2 tensor as a rank-1 tensor.
Tensor row(const Tensor& x, std::size_t i);
/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(const std::vector<Tensor>& parts);

Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, std::size_t axis);

/// Max-subtracted softmax over the last axis.
Tensor softmax(const Tensor& x);

/// a.b / (max(|a|,eps) max(|b|,eps)) for rank-1 a, b.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);
/// Pairwise cosine similarity of rows: q[m,d], s[k,d] -> [m,k].
Tensor cosine_matrix(const Tensor& q, const Tensor& s);

/// -log p[index] with p clamped below at kLogClamp. `clamped` is set when the
/// clamp was active.
Tensor nll(const Tensor& probs, std::size_t index, bool* clamped = nullptr);
/// Mean over rows of -log probs[i, labels[i]], clamped. Adds the number of
/// clamped rows to `clamped_count`.
Tensor nll_rows(const Tensor& probs, std::span<const int> labels,
                std::size_t* clamped_count = nullptr);
/// Mean cross-entropy of row-wise softmax(logits) at labels (log-sum-exp form).
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Stride-1, same-padded 3x3 convolution: in[N,C,H,W], kernel[F,C,3,3].
Tensor conv2d(const Tensor& input, const Tensor& kernel);

enum class PoolRounding { ceil, floor };

/// 2x2 max pooling with stride 2. Ceil rounding treats the missing row/column
/// of odd extents as -inf; floor rounding drops it. Gradient goes to the first
/// maximal element in row-major order.
Tensor maxpool2x2(const Tensor& input, PoolRounding rounding = PoolRounding::ceil);

enum class Mode { train, eval };

struct BatchNormStats {
  std::vector<double> mean;
  std::vector<double> var;

  static BatchNormStats identity(std::size_t channels);
};

/// Per-channel batch normalisation over axis 1 of x[N,C] or x[N,C,H,W].
/// Train mode normalises with biased batch statistics and updates `stats`
/// with momentum (running variance uses the unbiased estimate); eval mode
/// uses `stats` as given.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 BatchNormStats& stats, Mode mode,
                 double momentum = kBatchNormMomentum, double eps = kBatchNormEps);
/// Eval-mode only.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 const BatchNormStats& stats, double eps = kBatchNormEps);

}  // namespace matchkit
