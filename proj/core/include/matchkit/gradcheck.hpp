// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "matchkit/encoders.hpp"
#include "matchkit/params.hpp"

namespace matchkit {

struct GroupError {
  std::string name;
  std::size_t count = 0;
  /// |analytic - numeric|_2 / max(|analytic|_2, |numeric|_2)
  double relative_error = 0.0;
};

struct GradCheckReport {
  std::vector<GroupError> groups;
  double max_error = 0.0;
  std::string worst_group;
  bool passed = false;
};

/// Central differences over every element of every tensor in `params`
/// against the gradients of one backward pass. `loss` must rebuild the graph
/// from the current parameter values on each call.
GradCheckReport gradcheck(ModelParams& params, const std::function<Tensor(ModelParams&)>& loss,
                          double step = 1e-5, double tolerance = 1e-4);

struct EpisodeGradCheckOptions {
  std::size_t dim = 8;
  std::size_t ways = 2;
  std::size_t shots = 1;
  std::size_t batch_per_class = 1;
  bool fce = false;
  std::size_t fce_steps = 2;
  std::uint64_t seed = 7;
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Encoder under test; mlp uses one hidden layer of width 2*dim.
  EncoderKind encoder = EncoderKind::mlp;
  ConvEmbedConfig conv{2, 4, 8, 1};
};

/// Full matching-network episode loss on random inputs.
GradCheckReport gradcheck_episode(const EpisodeGradCheckOptions& options);

}  // namespace matchkit
