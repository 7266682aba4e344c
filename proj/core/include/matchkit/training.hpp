// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "matchkit/checkpoint.hpp"
#include "matchkit/encoders.hpp"
#include "matchkit/episodes.hpp"
#include "matchkit/error.hpp"
#include "matchkit/evaluation.hpp"
#include "matchkit/optimizer.hpp"

namespace matchkit {

struct TrainConfig {
  ModelConfig model;
  std::size_t ways = 5;
  std::size_t shots = 1;
  std::size_t batch_per_class = 2;
  std::size_t episodes_total = 30000;
  AdamConfig adam;
  std::size_t eval_every = 1000;  // 0 disables periodic evaluation
  std::size_t eval_episodes = 1000;
  std::uint64_t seed = 1;

  void validate() const;
  /// key=value lines covering every field; the default configuration text.
  std::string canonical_text() const;
};

struct StepRecord {
  std::uint64_t step = 0;  // 1-based episode counter after the update
  double loss = 0.0;
  std::optional<double> eval_accuracy;
};

/// "step\tloss\teval_acc" with "-" when no evaluation ran at that step.
std::string format_metrics_line(const StepRecord& record);

/// Training aborted on a non-finite value. Carries the state at the start of
/// the failing step.
class NumericAbort : public NumericError {
 public:
  NumericAbort(const std::string& what, Checkpoint diagnostic)
      : NumericError(what), diagnostic_(std::move(diagnostic)) {}
  const Checkpoint& diagnostic() const { return diagnostic_; }

 private:
  Checkpoint diagnostic_;
};

/// Episodic meta-training: one sampled training episode per Adam step,
/// periodic evaluation on held-out classes under the same (ways, shots).
class Trainer {
 public:
  Trainer(TrainConfig config, const ClassDataset& dataset, SplitSpec split,
          std::string config_text = {});
  /// Resumes from `resume`; its hash must match the configuration text.
  Trainer(TrainConfig config, const ClassDataset& dataset, SplitSpec split, Checkpoint resume,
          std::string config_text = {});

  StepRecord step();
  /// Steps until episodes_total, invoking `on_step` after each update.
  void run(const std::function<void(const StepRecord&)>& on_step = {});
  /// Steps until the episode counter reaches `episode`.
  void run_until(std::uint64_t episode, const std::function<void(const StepRecord&)>& on_step = {});

  Checkpoint checkpoint() const;
  EvalReport evaluate_held_out(std::size_t threads = 1) const;

  const ModelParams& params() const { return params_; }
  const TrainConfig& config() const { return config_; }
  std::uint64_t episode() const { return episode_; }
  bool finished() const { return episode_ >= config_.episodes_total; }

  /// Worker threads for the periodic held-out evaluation.
  void set_eval_threads(std::size_t threads) { eval_threads_ = threads == 0 ? 1 : threads; }

  /// Called with every training episode before its update.
  void set_episode_observer(std::function<void(const Episode&)> observer) {
    observer_ = std::move(observer);
  }

 private:
  TrainConfig config_;
  const ClassDataset& dataset_;
  SplitSpec split_;
  std::unordered_set<int> train_ids_;
  std::string config_text_;
  std::uint64_t config_hash_ = 0;
  ModelParams params_;
  AdamState adam_;
  Rng rng_;
  std::uint64_t episode_ = 0;
  std::size_t eval_threads_ = 1;
  std::function<void(const Episode&)> observer_;
};

}  // namespace matchkit
