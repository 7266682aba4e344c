// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "matchkit/encoders.hpp"
#include "matchkit/episodes.hpp"
#include "matchkit/evaluation.hpp"
#include "matchkit/optimizer.hpp"
#include "matchkit/params.hpp"
#include "matchkit/pipeline.hpp"

namespace matchkit {

inline constexpr const char* kHeadWeight = "head.weight";
inline constexpr const char* kHeadBias = "head.bias";

struct BaselineConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  /// Caps the number of minibatch updates; 0 means epochs alone decide.
  std::size_t max_steps = 0;
  AdamConfig adam;
  std::uint64_t seed = 1;
};

/// Encoder plus a linear softmax head over the training classes.
struct BaselineClassifier {
  ModelConfig encoder;
  ModelParams params;          // encoder tensors + head.weight[d,C] + head.bias[C]
  std::vector<int> class_ids;  // head column c <-> dataset class class_ids[c]
  std::size_t steps = 0;
  double final_train_accuracy = 0.0;

  /// Encoder-only parameters ("head removed").
  ModelParams features() const;
};

/// Supervised cross-entropy over the classes in `train_ids`.
BaselineClassifier train_baseline_classifier(const ClassDataset& dataset,
                                             std::span<const int> train_ids,
                                             const ModelConfig& encoder,
                                             const BaselineConfig& config);

/// Training-set accuracy of the softmax head.
double baseline_train_accuracy(const BaselineClassifier& model, const ClassDataset& dataset);

enum class FineTuneHead { cosine, softmax };

struct FineTuneOptions {
  FineTuneHead head = FineTuneHead::softmax;
  std::size_t steps = 100;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

struct FineTuned {
  FineTuneHead head = FineTuneHead::softmax;
  ModelParams params;  // encoder copy (+ fresh N-way head for softmax)
  std::size_t ways = 0;
  double support_accuracy = 0.0;  // after the last step
};

/// Gradient steps on the support set only; `params` is left untouched.
/// Softmax: fresh N-way linear head trained with cross-entropy. Cosine:
/// each support item is matched against the whole support set.
FineTuned fine_tune(const ModelParams& params, const ModelConfig& config,
                    const Tensor& support_inputs, const std::vector<int>& support_labels,
                    std::size_t ways, const FineTuneOptions& options);

/// Predictions for the batch of `episode` with a fine-tuned model.
std::vector<int> predict_fine_tuned(const FineTuned& tuned, const ModelConfig& config,
                                    const EpisodeTensors& episode);

/// Baseline features with cosine matching; fine-tunes first when steps > 0.
EpisodePredictor baseline_cosine_predictor(const ModelParams& features, const ModelConfig& config,
                                           std::size_t fine_tune_steps = 0, double lr = 1e-3);
/// Fresh softmax head fine-tuned on each support set.
EpisodePredictor baseline_softmax_predictor(const ModelParams& features, const ModelConfig& config,
                                            std::size_t fine_tune_steps = 100, double lr = 1e-3);

}  // namespace matchkit
