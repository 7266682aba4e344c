// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "matchkit/encoders.hpp"
#include "matchkit/episodes.hpp"
#include "matchkit/matcher.hpp"
#include "matchkit/params.hpp"
#include "matchkit/pipeline.hpp"

namespace matchkit {

struct EvalReport {
  std::size_t ways = 0;
  std::size_t shots = 0;
  std::size_t n_episodes = 0;
  double accuracy = 0.0;
  double ci95 = 0.0;  // 1.96 * sample std / sqrt(n)
  std::vector<double> episode_accuracy;

  /// "acc=<float> ±<ci> n=<episodes>"
  std::string summary() const;
};

struct EvalOptions {
  std::size_t ways = 5;
  std::size_t shots = 1;
  std::size_t batch_per_class = 2;
  std::size_t episodes = 1000;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

/// Maps a materialised episode to one predicted local label per batch item.
/// Must be safe to call concurrently.
using EpisodePredictor = std::function<std::vector<int>(const EpisodeTensors&)>;

/// Seed of the i-th evaluation episode; independent of thread count.
std::uint64_t episode_seed(std::uint64_t seed, std::size_t index);

/// Mean batch accuracy over independent seeded episodes drawn from `pool`.
EvalReport evaluate(const EpisodePredictor& predictor, const ClassDataset& dataset,
                    std::span<const int> pool, const EvalOptions& options);

/// Eval-mode matching network (batchnorm uses running statistics).
EpisodePredictor matching_predictor(const ModelParams& params, const ModelConfig& config,
                                    AttentionSpec attention = {});
/// Raw inputs as embeddings.
EpisodePredictor pixel_predictor(AttentionSpec attention = {});

EvalReport evaluate(const ModelParams& params, const ModelConfig& config,
                    const ClassDataset& dataset, std::span<const int> pool,
                    const EvalOptions& options, AttentionSpec attention = {});

}  // namespace matchkit
