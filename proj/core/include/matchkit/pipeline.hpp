// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "matchkit/encoders.hpp"
#include "matchkit/episodes.hpp"
#include "matchkit/matcher.hpp"
#include "matchkit/params.hpp"

namespace matchkit {

/// Episode examples materialised as input tensors.
struct EpisodeTensors {
  Tensor support_inputs;  // [k, input_shape...]
  std::vector<int> support_labels;
  Tensor batch_inputs;    // [m, input_shape...]
  std::vector<int> batch_labels;
  std::size_t ways = 0;

  static EpisodeTensors from(const ClassDataset& dataset, const Episode& episode);
};

struct EpisodeEmbeddings {
  Tensor support;  // g(x_i) or g(x_i, S)
  Tensor batch;    // f(x) or f(x, S)
};

/// Embeds support and batch in one encoder pass (batchnorm statistics are
/// shared across both in train mode), then applies full context embeddings
/// when enabled.
EpisodeEmbeddings embed_episode(ModelParams& params, const ModelConfig& config,
                                const EpisodeTensors& episode, Mode mode);
EpisodeEmbeddings embed_episode(const ModelParams& params, const ModelConfig& config,
                                const EpisodeTensors& episode);

/// [m, N] class distributions for the batch.
Tensor episode_probs(ModelParams& params, const ModelConfig& config, const EpisodeTensors& episode,
                     Mode mode, const AttentionSpec& attention = {});
Tensor episode_probs(const ModelParams& params, const ModelConfig& config,
                     const EpisodeTensors& episode, const AttentionSpec& attention = {});

/// One distribution per batch item through the full context embedding
/// pipeline. Requires config.fce.enabled.
std::vector<ClassDistribution> forward_fce(ModelParams& params, const ModelConfig& config,
                                           const EpisodeTensors& episode, Mode mode);

struct LossResult {
  Tensor loss;                  // scalar
  Tensor probs;                 // [m, N]
  std::size_t clamped_log = 0;  // rows whose true-class probability hit the log clamp
};

/// Mean over the batch of -log P(y | x, S). Training requires softmax-cosine
/// attention, the only differentiable mode.
LossResult episode_nll(ModelParams& params, const ModelConfig& config,
                       const EpisodeTensors& episode, Mode mode = Mode::train,
                       const AttentionSpec& attention = {});

double batch_accuracy(const Tensor& probs, const std::vector<int>& labels);

}  // namespace matchkit
