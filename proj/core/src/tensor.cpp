// SPDX-License-Identifier: Apache-2.0
#include "matchkit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "autograd.hpp"
#include "matchkit/error.hpp"

namespace matchkit {

namespace {

thread_local bool g_grad_enabled = true;
thread_local testing::FaultSite g_fault = testing::FaultSite::none;

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<double> values,
                                        bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  for (std::size_t extent : shape) {
    if (extent == 0) throw ShapeError("tensor: zero extent in shape " + shape_str(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

const detail::Node& checked(const std::shared_ptr<detail::Node>& node) {
  if (!node) throw GraphError("tensor: use of an undefined tensor");
  return *node;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(make_leaf(std::move(shape), std::move(values), requires_grad)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<double>{value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return checked(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return checked(node_).value.size(); }

std::span<const double> Tensor::data() const& { return checked(node_).value; }

double Tensor::item() const {
  const auto& node = checked(node_);
  if (node.value.size() != 1) {
    throw ShapeError("tensor: item() on shape " + shape_str(node.shape));
  }
  return node.value[0];
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }

bool Tensor::is_leaf() const { return checked(node_).leaf; }

std::span<double> Tensor::leaf_data() {
  checked(node_);
  if (!node_->leaf) throw GraphError("tensor: leaf_data() on an op result");
  return node_->value;
}

bool Tensor::has_grad() const { return !checked(node_).grad.empty(); }

std::span<const double> Tensor::grad() const { return checked(node_).grad; }

void Tensor::zero_grad() {
  checked(node_);
  node_->grad.clear();
}

Tensor Tensor::detach() const {
  const auto& node = checked(node_);
  return Tensor(node.shape, node.value, false);
}

Tensor Tensor::clone() const {
  const auto& node = checked(node_);
  return Tensor(node.shape, node.value, node.requires_grad);
}

namespace detail {

Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   const std::vector<Tensor>& inputs, BackwardFn backward) {
  for (double v : value) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value produced by ") + op);
    }
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->leaf = false;
  node->op = op;
  bool any_tracked = false;
  for (const Tensor& in : inputs) any_tracked = any_tracked || in.requires_grad();
  if (g_grad_enabled && any_tracked) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const Tensor& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

}  // namespace detail

void backward(const Tensor& loss) {
  const auto& root = loss.node();
  checked(root);
  if (root->value.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_str(root->shape));
  }
  if (root->consumed) throw GraphError("backward: graph already consumed");
  if (!root->requires_grad) throw GraphError("backward: loss does not require grad");

  // Iterative post-order DFS over tracked nodes.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (!child->requires_grad || visited.count(child)) continue;
      if (child->consumed) throw GraphError("backward: graph already consumed");
      visited.insert(child);
      stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->leaf || !node->backward) continue;
    node->grad_buffer();
    node->backward(*node);
  }
  for (detail::Node* node : order) {
    if (node->leaf) continue;
    node->consumed = true;
    node->backward = nullptr;
    node->inputs.clear();
    node->grad.clear();
    node->grad.shrink_to_fit();
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

EnableGradGuard::EnableGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = true; }

EnableGradGuard::~EnableGradGuard() { g_grad_enabled = previous_; }

namespace testing {

ScopedBackwardFault::ScopedBackwardFault(FaultSite site) : previous_(g_fault) {
  g_fault = site;
}

ScopedBackwardFault::~ScopedBackwardFault() { g_fault = previous_; }

FaultSite active_fault() { return g_fault; }

}  // namespace testing

}  // namespace matchkit
