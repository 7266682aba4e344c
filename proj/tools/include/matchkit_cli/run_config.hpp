// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "matchkit/episodes.hpp"
#include "matchkit/matcher.hpp"
#include "matchkit/training.hpp"

namespace matchkit::cli {

struct DatasetSection {
  std::string path;
  std::size_t image_size = 28;
  bool rotations = true;  // image datasets only
  std::size_t train_classes = 1200;
  std::uint64_t split_seed = 1;
};

struct ModelSection {
  EncoderKind encoder = EncoderKind::conv;
  std::size_t conv_blocks = 4;
  std::size_t filters = 64;
  std::size_t input_dim = 16;
  std::vector<std::size_t> mlp_hidden{64};
  std::size_t embedding_dim = 64;
  bool fce = false;
  std::size_t fce_steps = 5;
};

struct TrainSection {
  std::size_t ways = 5;
  std::size_t shots = 1;
  std::size_t batch_per_class = 2;
  std::size_t episodes = 30000;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t eval_every = 1000;
  std::size_t eval_episodes = 1000;
  std::size_t checkpoint_every = 1000;
  std::uint64_t seed = 1;
};

struct EvalSection {
  AttentionKind attention = AttentionKind::softmax_cosine;
  std::size_t knn_drop = 0;
  double kde_bandwidth = 1.0;
  std::size_t episodes = 1000;
  std::uint64_t seed = 1;
};

struct BaselineSection {
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  /// 0 = match the image budget of the episodic run.
  std::size_t max_steps = 0;
  std::size_t fine_tune_steps = 0;
  double fine_tune_lr = 1e-3;
};

/// Sections [dataset] [model] [train] [eval] [baseline]. Unknown sections or
/// keys are rejected; omitted keys take the defaults above.
struct RunConfig {
  DatasetSection dataset;
  ModelSection model;
  TrainSection train;
  EvalSection eval;
  BaselineSection baseline;

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);

  /// Every key with its effective value, in a fixed order.
  std::string to_text() const;
  std::uint64_t hash() const;

  void validate() const;
  /// `image_size` applies to conv encoders; MLP encoders use input_dim.
  ModelConfig model_config() const;
  TrainConfig train_config() const;
  AttentionSpec attention() const;
  /// Images processed by the episodic run.
  std::size_t episode_image_budget() const;
};

/// Dataset and split as used for training: image trees are split over their
/// original classes, then rotation-augmented when enabled.
struct PreparedData {
  ClassDataset dataset;
  SplitSpec split;
};

PreparedData prepare_data(const DatasetSection& section);

}  // namespace matchkit::cli
