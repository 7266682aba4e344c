// SPDX-License-Identifier: Apache-2.0
#include "matchkit/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>

#include "autograd.hpp"
#include "matchkit/error.hpp"

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

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(x.shape()));
  }
}

// Elementwise unary op whose derivative is expressed through input x and output y.
template <typename Forward, typename Derivative>
Tensor unary(const char* op, const Tensor& x, Forward f, Derivative df) {
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_result(op, x.shape(), std::move(out), {x}, [df](Node& self) {
    const auto& xv = input_value(self, 0);
    auto& gx = input_grad(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * df(xv[i], self.value[i]);
  });
}

// Decomposes a shape around `axis` into (outer, extent, inner) strides.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!tracked(self, k)) continue;
      auto& g = input_grad(self, k);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (tracked(self, 0)) {
      auto& g = input_grad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (tracked(self, 1)) {
      auto& g = input_grad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& av = input_value(self, 0);
    const auto& bv = input_value(self, 1);
    if (tracked(self, 0)) {
      auto& g = input_grad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (tracked(self, 1)) {
      auto& g = input_grad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  require_rank(x, 2, "add_row");
  require_rank(bias, 1, "add_row");
  const std::size_t m = x.dim(0);
  const std::size_t n = x.dim(1);
  if (bias.dim(0) != n) {
    throw ShapeError("add_row: bias " + shape_str(bias.shape()) + " vs rows of " +
                     shape_str(x.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  auto bv = bias.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  }
  return make_result("add_row", x.shape(), std::move(out), {x, bias}, [m, n](Node& self) {
    if (tracked(self, 0)) {
      auto& g = input_grad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (tracked(self, 1)) {
      auto& g = input_grad(self, 1);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
      }
    }
  });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw NumericError("log: non-positive input");
  }
  return unary(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0);
  const std::size_t n = a.dim(1);
  const std::size_t p = b.dim(1);
  if (b.dim(0) != n) {
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(m * p);
  MatMap(out.data(), m, p).noalias() =
      ConstMatMap(a.data().data(), m, n) * ConstMatMap(b.data().data(), n, p);
  return make_result("matmul", {m, p}, std::move(out), {a, b}, [m, n, p](Node& self) {
    ConstMatMap g(self.grad.data(), m, p);
    if (tracked(self, 0)) {
      MatMap(input_grad(self, 0).data(), m, n).noalias() +=
          g * ConstMatMap(input_value(self, 1).data(), n, p).transpose();
    }
    if (tracked(self, 1)) {
      MatMap(input_grad(self, 1).data(), n, p).noalias() +=
          ConstMatMap(input_value(self, 0).data(), m, n).transpose() * g;
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const std::size_t m = a.dim(0);
  const std::size_t n = a.dim(1);
  const std::size_t p = b.dim(0);
  if (b.dim(1) != n) {
    throw ShapeError("matmul_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  }
  std::vector<double> out(m * p);
  MatMap(out.data(), m, p).noalias() =
      ConstMatMap(a.data().data(), m, n) * ConstMatMap(b.data().data(), p, n).transpose();
  return make_result("matmul_nt", {m, p}, std::move(out), {a, b}, [m, n, p](Node& self) {
    ConstMatMap g(self.grad.data(), m, p);
    if (tracked(self, 0)) {
      MatMap(input_grad(self, 0).data(), m, n).noalias() +=
          g * ConstMatMap(input_value(self, 1).data(), p, n);
    }
    if (tracked(self, 1)) {
      MatMap(input_grad(self, 1).data(), p, n).noalias() +=
          g.transpose() * ConstMatMap(input_value(self, 0).data(), m, n);
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0);
  const std::size_t n = a.dim(1);
  std::vector<double> out(m * n);
  auto av = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  }
  return make_result("transpose", {n, m}, std::move(out), {a}, [m, n](Node& self) {
    auto& g = input_grad(self, 0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {x}, [](Node& self) {
    auto& g = input_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> chunk(parts.size());
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Shape& s = parts[p].shape();
    bool compatible = s.size() == first.size();
    for (std::size_t i = 0; compatible && i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) compatible = false;
    }
    if (!compatible) {
      throw ShapeError("concat: " + shape_str(s) + " incompatible with " + shape_str(first));
    }
    out_shape[axis] += s[axis];
    chunk[p] = split_axis(s, axis).extent * split_axis(s, axis).inner;
  }
  const std::size_t outer = split_axis(first, axis).outer;
  std::size_t row_width = 0;
  for (std::size_t c : chunk) row_width += c;
  std::vector<double> out(outer * row_width);
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t offset = o * row_width;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      auto src = parts[p].data().subspan(o * chunk[p], chunk[p]);
      std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(offset));
      offset += chunk[p];
    }
  }
  return make_result("concat", std::move(out_shape), std::move(out), parts,
                     [chunk, outer, row_width](Node& self) {
                       std::size_t col = 0;
                       for (std::size_t p = 0; p < chunk.size(); ++p) {
                         if (tracked(self, p)) {
                           auto& g = input_grad(self, p);
                           for (std::size_t o = 0; o < outer; ++o) {
                             const double* src = self.grad.data() + o * row_width + col;
                             for (std::size_t i = 0; i < chunk[p]; ++i) g[o * chunk[p] + i] += src[i];
                           }
                         }
                         col += chunk[p];
                       }
                     });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() == 0) throw ShapeError("slice_rows: scalar input");
  if (begin >= end || end > x.dim(0)) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for " + shape_str(x.shape()));
  }
  const std::size_t width = x.numel() / x.dim(0);
  Shape shape = x.shape();
  shape[0] = end - begin;
  auto src = x.data().subspan(begin * width, (end - begin) * width);
  std::vector<double> out(src.begin(), src.end());
  return make_result("slice_rows", std::move(shape), std::move(out), {x},
                     [offset = begin * width](Node& self) {
                       auto& g = input_grad(self, 0);
                       for (std::size_t i = 0; i < self.grad.size(); ++i) g[offset + i] += self.grad[i];
                     });
}

Tensor row(const Tensor& x, std::size_t i) {
  require_rank(x, 2, "row");
  return reshape(slice_rows(x, i, i + 1), Shape{x.dim(1)});
}

Tensor stack(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("stack: no inputs");
  std::vector<Tensor> lifted;
  lifted.reserve(parts.size());
  for (const Tensor& p : parts) {
    Shape s = p.shape();
    s.insert(s.begin(), 1);
    lifted.push_back(reshape(p, std::move(s)));
  }
  return concat(lifted, 0);
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result("sum", Shape{}, {total}, {x}, [](Node& self) {
    auto& g = input_grad(self, 0);
    for (double& v : g) v += self.grad[0];
  });
}

Tensor sum(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) throw ShapeError("sum: axis out of range for " + shape_str(x.shape()));
  const AxisSplit s = split_axis(x.shape(), axis);
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(s.outer * s.inner, 0.0);
  auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t a = 0; a < s.extent; ++a) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        out[o * s.inner + i] += xv[(o * s.extent + a) * s.inner + i];
      }
    }
  }
  return make_result("sum_axis", std::move(shape), std::move(out), {x}, [s](Node& self) {
    auto& g = input_grad(self, 0);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t a = 0; a < s.extent; ++a) {
        for (std::size_t i = 0; i < s.inner; ++i) {
          g[(o * s.extent + a) * s.inner + i] += self.grad[o * s.inner + i];
        }
      }
    }
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mean(const Tensor& x, std::size_t axis) {
  return scale(sum(x, axis), 1.0 / static_cast<double>(x.dim(axis)));
}

Tensor softmax(const Tensor& x) {
  if (x.rank() == 0) throw ShapeError("softmax: scalar input");
  const std::size_t width = x.shape().back();
  const std::size_t rows = x.numel() / width;
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * width;
    double* o = out.data() + r * width;
    const double peak = *std::max_element(in, in + width);
    double total = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      o[j] = std::exp(in[j] - peak);
      total += o[j];
    }
    for (std::size_t j = 0; j < width; ++j) o[j] /= total;
  }
  return make_result("softmax", x.shape(), std::move(out), {x}, [rows, width](Node& self) {
    auto& g = input_grad(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * width;
      const double* gy = self.grad.data() + r * width;
      double dot = 0.0;
      for (std::size_t j = 0; j < width; ++j) dot += gy[j] * y[j];
      for (std::size_t j = 0; j < width; ++j) g[r * width + j] += y[j] * (gy[j] - dot);
    }
  });
}

namespace {

struct RowNorms {
  std::vector<double> raw;      // |row|
  std::vector<double> floored;  // max(|row|, eps)
};

RowNorms row_norms(std::span<const double> v, std::size_t rows, std::size_t d) {
  RowNorms n;
  n.raw.resize(rows);
  n.floored.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += v[r * d + j] * v[r * d + j];
    n.raw[r] = std::sqrt(s);
    n.floored[r] = std::max(n.raw[r], kCosineEps);
  }
  return n;
}

// Gradient of c_ij = <a_i, b_j> / (na_i nb_j) w.r.t. a, given upstream G[m,k]:
//   dA_i = sum_j G_ij b_j / (na_i nb_j) - (sum_j G_ij c_ij) a_i / |a_i|^2
// where the second term vanishes when |a_i| sits on the eps floor.
void cosine_grad_rows(std::span<const double> grad_out, std::span<const double> cos,
                      std::span<const double> a, const RowNorms& an, std::span<const double> b,
                      const RowNorms& bn, std::size_t m, std::size_t k, std::size_t d,
                      bool a_is_rows, std::vector<double>& ga, double fault) {
  for (std::size_t i = 0; i < m; ++i) {
    double radial = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t ij = a_is_rows ? i * k + j : j * m + i;
      const double g = grad_out[ij];
      if (g == 0.0) continue;
      const double w = g / (an.floored[i] * bn.floored[j]);
      for (std::size_t t = 0; t < d; ++t) ga[i * d + t] += w * b[j * d + t] * fault;
      radial += g * cos[ij];
    }
    if (an.raw[i] > kCosineEps) {
      const double w = radial / (an.raw[i] * an.raw[i]);
      for (std::size_t t = 0; t < d; ++t) ga[i * d + t] -= w * a[i * d + t];
    }
  }
}

double cosine_fault_factor() {
  return testing::active_fault() == testing::FaultSite::cosine_backward ? 1.1 : 1.0;
}

}  // namespace

Tensor cosine_matrix(const Tensor& q, const Tensor& s) {
  require_rank(q, 2, "cosine_matrix");
  require_rank(s, 2, "cosine_matrix");
  const std::size_t m = q.dim(0);
  const std::size_t k = s.dim(0);
  const std::size_t d = q.dim(1);
  if (s.dim(1) != d) {
    throw ShapeError("cosine_matrix: " + shape_str(q.shape()) + " vs " + shape_str(s.shape()));
  }
  const RowNorms qn = row_norms(q.data(), m, d);
  const RowNorms sn = row_norms(s.data(), k, d);
  std::vector<double> out(m * k);
  MatMap(out.data(), m, k).noalias() =
      ConstMatMap(q.data().data(), m, d) * ConstMatMap(s.data().data(), k, d).transpose();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] /= qn.floored[i] * sn.floored[j];
  }
  const double fault = cosine_fault_factor();
  return make_result("cosine_matrix", {m, k}, std::move(out), {q, s},
                     [m, k, d, qn, sn, fault](Node& self) {
                       const auto& qv = input_value(self, 0);
                       const auto& sv = input_value(self, 1);
                       if (tracked(self, 0)) {
                         cosine_grad_rows(self.grad, self.value, qv, qn, sv, sn, m, k, d, true,
                                          input_grad(self, 0), fault);
                       }
                       if (tracked(self, 1)) {
                         cosine_grad_rows(self.grad, self.value, sv, sn, qv, qn, k, m, d, false,
                                          input_grad(self, 1), fault);
                       }
                     });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  require_rank(a, 1, "cosine_similarity");
  require_rank(b, 1, "cosine_similarity");
  if (a.dim(0) != b.dim(0)) {
    throw ShapeError("cosine_similarity: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t d = a.dim(0);
  return reshape(cosine_matrix(reshape(a, {1, d}), reshape(b, {1, d})), Shape{});
}

Tensor nll(const Tensor& probs, std::size_t index, bool* clamped) {
  require_rank(probs, 1, "nll");
  if (index >= probs.dim(0)) throw ShapeError("nll: index out of range");
  const int label = static_cast<int>(index);
  std::size_t count = 0;
  Tensor out = nll_rows(reshape(probs, {1, probs.dim(0)}), std::span<const int>(&label, 1), &count);
  if (clamped) *clamped = count > 0;
  return out;
}

Tensor nll_rows(const Tensor& probs, std::span<const int> labels, std::size_t* clamped_count) {
  require_rank(probs, 2, "nll_rows");
  const std::size_t m = probs.dim(0);
  const std::size_t n = probs.dim(1);
  if (labels.size() != m) throw ShapeError("nll_rows: label count does not match rows");
  std::vector<int> lab(labels.begin(), labels.end());
  std::vector<bool> clamp(m, false);
  double total = 0.0;
  auto pv = probs.data();
  for (std::size_t i = 0; i < m; ++i) {
    if (lab[i] < 0 || static_cast<std::size_t>(lab[i]) >= n) {
      throw ShapeError("nll_rows: label out of range");
    }
    const double p = pv[i * n + static_cast<std::size_t>(lab[i])];
    if (p < kLogClamp) {
      clamp[i] = true;
      if (clamped_count) ++*clamped_count;
    }
    total -= std::log(std::max(p, kLogClamp));
  }
  return make_result("nll_rows", Shape{}, {total / static_cast<double>(m)}, {probs},
                     [m, n, lab = std::move(lab), clamp = std::move(clamp)](Node& self) {
                       const auto& pv = input_value(self, 0);
                       auto& g = input_grad(self, 0);
                       const double scale = self.grad[0] / static_cast<double>(m);
                       for (std::size_t i = 0; i < m; ++i) {
                         if (clamp[i]) continue;
                         const std::size_t at = i * n + static_cast<std::size_t>(lab[i]);
                         g[at] -= scale / pv[at];
                       }
                     });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy");
  const std::size_t m = logits.dim(0);
  const std::size_t n = logits.dim(1);
  if (labels.size() != m) throw ShapeError("softmax_cross_entropy: label count mismatch");
  std::vector<int> lab(labels.begin(), labels.end());
  std::vector<double> probs(m * n);
  double total = 0.0;
  auto lv = logits.data();
  for (std::size_t i = 0; i < m; ++i) {
    if (lab[i] < 0 || static_cast<std::size_t>(lab[i]) >= n) {
      throw ShapeError("softmax_cross_entropy: label out of range");
    }
    const double* row = lv.data() + i * n;
    const double peak = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      probs[i * n + j] = std::exp(row[j] - peak);
      z += probs[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) probs[i * n + j] /= z;
    total += std::log(z) + peak - row[lab[i]];
  }
  return make_result("softmax_cross_entropy", Shape{}, {total / static_cast<double>(m)}, {logits},
                     [m, n, lab = std::move(lab), probs = std::move(probs)](Node& self) {
                       auto& g = input_grad(self, 0);
                       const double scale = self.grad[0] / static_cast<double>(m);
                       for (std::size_t i = 0; i < m; ++i) {
                         for (std::size_t j = 0; j < n; ++j) {
                           const double target = static_cast<int>(j) == lab[i] ? 1.0 : 0.0;
                           g[i * n + j] += scale * (probs[i * n + j] - target);
                         }
                       }
                     });
}

}  // namespace matchkit
