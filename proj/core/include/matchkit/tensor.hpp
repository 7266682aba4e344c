// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace matchkit {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

/// Dense row-major double tensor with optional gradient tracking.
///
/// A Tensor is a handle onto a node of the dynamic autograd tape. Copies share
/// the node; use clone() for an independent leaf. Values of non-leaf tensors
/// never change after the forward op that created them. Leaves (parameters)
/// may be updated in place via leaf_data() between passes.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const&;
  std::span<const double> data() const&& = delete;
  double at(std::size_t flat_index) const { return data()[flat_index]; }
  double item() const;

  bool requires_grad() const;
  bool is_leaf() const;

  /// Mutable storage of a leaf tensor. Throws GraphError on op results.
  std::span<double> leaf_data();

  bool has_grad() const;
  /// Accumulated gradient; empty span when nothing was accumulated.
  std::span<const double> grad() const;
  void zero_grad();

  /// Copy of the values with no history and no gradient tracking.
  Tensor detach() const;
  /// Independent leaf copy that keeps requires_grad.
  Tensor clone() const;

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Reverse-mode pass from a scalar loss into every tracked leaf.
/// Each graph can be traversed once; a second call raises GraphError.
void backward(const Tensor& loss);

bool grad_enabled();

/// Disables taping on the current thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Re-enables taping inside a NoGradGuard scope (e.g. fine-tuning during
/// evaluation).
class EnableGradGuard {
 public:
  EnableGradGuard();
  ~EnableGradGuard();
  EnableGradGuard(const EnableGradGuard&) = delete;
  EnableGradGuard& operator=(const EnableGradGuard&) = delete;

 private:
  bool previous_;
};

namespace testing {

enum class FaultSite { none, cosine_backward };

/// Test hook: perturbs one backward rule on the current thread so gradient
/// checks can be shown to catch it.
class ScopedBackwardFault {
 public:
  explicit ScopedBackwardFault(FaultSite site);
  ~ScopedBackwardFault();
  ScopedBackwardFault(const ScopedBackwardFault&) = delete;
  ScopedBackwardFault& operator=(const ScopedBackwardFault&) = delete;

 private:
  FaultSite previous_;
};

FaultSite active_fault();

}  // namespace testing

}  // namespace matchkit
