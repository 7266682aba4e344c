// SPDX-License-Identifier: Apache-2.0
#include "matchkit/optimizer.hpp"

#include <cmath>

#include "matchkit/error.hpp"

namespace matchkit {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("adam: lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("adam: betas must lie in [0,1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("adam: epsilon must be positive");
}

void adam_step(ModelParams& params, AdamState& state, const AdamConfig& config) {
  for (const auto& [name, tensor] : params.tensors()) {
    for (double g : tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient for " + name);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (auto& [name, tensor] : params.tensors()) {
    const std::size_t n = tensor.numel();
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) m.assign(n, 0.0);
    if (v.empty()) v.assign(n, 0.0);
    auto grad = tensor.grad();
    auto w = tensor.leaf_data();
    for (std::size_t i = 0; i < n; ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
      w[i] -= config.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.epsilon);
    }
  }
}

}  // namespace matchkit
