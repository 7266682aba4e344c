// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "matchkit/params.hpp"

namespace matchkit {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct AdamState {
  std::uint64_t step = 0;
  std::map<std::string, std::vector<double>, std::less<>> m;
  std::map<std::string, std::vector<double>, std::less<>> v;

  bool identical(const AdamState& other) const { return step == other.step && m == other.m && v == other.v; }
};

/// Bias-corrected Adam update of every tensor in `params`. A tensor without
/// an accumulated gradient is treated as having a zero gradient. Throws
/// NumericError if a gradient is non-finite.
void adam_step(ModelParams& params, AdamState& state, const AdamConfig& config);

}  // namespace matchkit
