// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "matchkit/tensor.hpp"

namespace matchkit::detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  bool consumed = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

using BackwardFn = std::function<void(Node& self)>;

/// Wraps a forward result. Records the inputs and backward rule only when
/// taping is enabled and some input is tracked. Throws NumericError on
/// non-finite values.
Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   const std::vector<Tensor>& inputs, BackwardFn backward);

inline bool tracked(const Node& self, std::size_t input) {
  return self.inputs[input]->requires_grad;
}

inline std::vector<double>& input_grad(Node& self, std::size_t input) {
  return self.inputs[input]->grad_buffer();
}

inline const std::vector<double>& input_value(const Node& self, std::size_t input) {
  return self.inputs[input]->value;
}

}  // namespace matchkit::detail
