// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <algorithm>
#include <atomic>

#include "matchkit/ops.hpp"
#include "matchkit/tensor.hpp"

namespace matchkit::test {

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, bool requires_grad = false,
                            double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = normal(rng);
  return Tensor(shape, std::move(v), requires_grad);
}

inline Tensor uniform_tensor(const Shape& shape, std::mt19937_64& rng, double lo, double hi,
                             bool requires_grad = false) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = u(rng);
  return Tensor(shape, std::move(v), requires_grad);
}

struct FdResult {
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
};

/// Compares the backward pass of `f` against central differences on every
/// element of every input. Relative error uses max(|a|, |n|, 1) as the scale.
inline FdResult finite_difference_check(std::vector<Tensor> inputs,
                                        const std::function<Tensor(const std::vector<Tensor>&)>& f,
                                        double h = 1e-6) {
  for (Tensor& x : inputs) x.zero_grad();
  backward(f(inputs));
  FdResult r;
  for (Tensor& x : inputs) {
    std::vector<double> analytic(x.numel(), 0.0);
    if (x.has_grad()) analytic.assign(x.grad().begin(), x.grad().end());
    NoGradGuard no_grad;
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const double orig = x.leaf_data()[i];
      x.leaf_data()[i] = orig + h;
      const double up = f(inputs).item();
      x.leaf_data()[i] = orig - h;
      const double down = f(inputs).item();
      x.leaf_data()[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double err = std::abs(numeric - analytic[i]);
      r.max_abs_error = std::max(r.max_abs_error, err);
      r.max_rel_error = std::max(
          r.max_rel_error, err / std::max({std::abs(numeric), std::abs(analytic[i]), 1.0}));
    }
  }
  return r;
}

/// Scalar projection sum(x * w) with fixed random weights so every output
/// element receives a distinct upstream gradient.
inline Tensor weighted_sum(const Tensor& x, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  const Tensor w = uniform_tensor(x.shape(), rng, 0.5, 1.5);
  return sum(mul(x, w));
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("matchkit_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace matchkit::test
