// SPDX-License-Identifier: Apache-2.0
#include "matchkit/training.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "matchkit/pipeline.hpp"

namespace matchkit {

namespace {

constexpr std::uint64_t kEvalSeedSalt = 0x6576616cull;

std::string real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string rng_text(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

Rng rng_from_text(const std::string& text) {
  Rng rng;
  std::istringstream in(text);
  in >> rng;
  if (!in) throw DataError("checkpoint: unreadable generator state");
  return rng;
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  if (ways < 2) throw ConfigError("train: ways must be at least 2");
  if (shots == 0) throw ConfigError("train: shots must be positive");
  if (batch_per_class == 0) throw ConfigError("train: batch_per_class must be positive");
  if (episodes_total == 0) throw ConfigError("train: episodes must be positive");
  if (eval_every > 0 && eval_episodes == 0) {
    throw ConfigError("train: eval_episodes must be positive when evaluation is enabled");
  }
  adam.validate();
}

std::string TrainConfig::canonical_text() const {
  std::ostringstream out;
  out << "model.encoder=" << to_string(model.encoder) << '\n'
      << "model.conv.num_blocks=" << model.conv.num_blocks << '\n'
      << "model.conv.filters=" << model.conv.filters << '\n'
      << "model.conv.input_size=" << model.conv.input_size << '\n'
      << "model.conv.in_channels=" << model.conv.in_channels << '\n'
      << "model.mlp.input_dim=" << model.mlp.input_dim << '\n'
      << "model.mlp.hidden_dims=";
  for (std::size_t i = 0; i < model.mlp.hidden_dims.size(); ++i) {
    out << (i ? "," : "") << model.mlp.hidden_dims[i];
  }
  out << '\n'
      << "model.mlp.output_dim=" << model.mlp.output_dim << '\n'
      << "model.fce.enabled=" << (model.fce.enabled ? "true" : "false") << '\n'
      << "model.fce.steps=" << model.fce.steps << '\n'
      << "train.ways=" << ways << '\n'
      << "train.shots=" << shots << '\n'
      << "train.batch_per_class=" << batch_per_class << '\n'
      << "train.episodes=" << episodes_total << '\n'
      << "train.lr=" << real(adam.lr) << '\n'
      << "train.beta1=" << real(adam.beta1) << '\n'
      << "train.beta2=" << real(adam.beta2) << '\n'
      << "train.epsilon=" << real(adam.epsilon) << '\n'
      << "train.eval_every=" << eval_every << '\n'
      << "train.eval_episodes=" << eval_episodes << '\n'
      << "train.seed=" << seed << '\n';
  return out.str();
}

std::string format_metrics_line(const StepRecord& record) {
  char buf[96];
  if (record.eval_accuracy) {
    std::snprintf(buf, sizeof buf, "%llu\t%.6f\t%.4f", static_cast<unsigned long long>(record.step),
                  record.loss, *record.eval_accuracy);
  } else {
    std::snprintf(buf, sizeof buf, "%llu\t%.6f\t-", static_cast<unsigned long long>(record.step),
                  record.loss);
  }
  return buf;
}

Trainer::Trainer(TrainConfig config, const ClassDataset& dataset, SplitSpec split,
                 std::string config_text)
    : config_(std::move(config)), dataset_(dataset), split_(std::move(split)),
      config_text_(std::move(config_text)) {
  config_.validate();
  dataset_.validate();
  split_.validate(dataset_);
  if (dataset_.example_shape != config_.model.input_shape()) {
    throw ConfigError("train: dataset examples are " + shape_str(dataset_.example_shape) +
                      " but the encoder expects " + shape_str(config_.model.input_shape()));
  }
  if (split_.train_class_ids.size() < config_.ways) {
    throw ConfigError("train: " + std::to_string(config_.ways) + "-way episodes need at least " +
                      std::to_string(config_.ways) + " training classes, split has " +
                      std::to_string(split_.train_class_ids.size()));
  }
  if (config_.eval_every > 0 && split_.test_class_ids.size() < config_.ways) {
    throw ConfigError("train: held-out evaluation needs at least " + std::to_string(config_.ways) +
                      " test classes, split has " + std::to_string(split_.test_class_ids.size()));
  }
  if (config_text_.empty()) config_text_ = config_.canonical_text();
  config_hash_ = config_hash(config_text_);
  train_ids_.insert(split_.train_class_ids.begin(), split_.train_class_ids.end());
  params_ = init_params(config_.model, config_.seed);
  rng_.seed(config_.seed ^ 0x5eed5eedull);
}

Trainer::Trainer(TrainConfig config, const ClassDataset& dataset, SplitSpec split,
                 Checkpoint resume, std::string config_text)
    : Trainer(std::move(config), dataset, std::move(split), std::move(config_text)) {
  if (resume.config_hash != config_hash_) {
    throw ConfigMismatchError("resume: checkpoint was written under a different configuration");
  }
  const ModelParams fresh = params_;
  for (const auto& [name, t] : fresh.tensors()) {
    if (!resume.params.contains(name) || resume.params.at(name).shape() != t.shape()) {
      throw ConfigMismatchError("resume: checkpoint lacks parameter " + name +
                                " of shape " + shape_str(t.shape()));
    }
  }
  params_ = std::move(resume.params);
  adam_ = std::move(resume.optimizer);
  rng_ = rng_from_text(resume.rng_state);
  episode_ = resume.episode;
}

StepRecord Trainer::step() {
  if (finished()) throw ConfigError("train: already at the final episode");
  const Rng rng_before = rng_;
  const auto stats_before = params_.batchnorm_stats();
  const AdamState adam_before = adam_;

  const Episode ep = sample_episode(dataset_, split_.train_class_ids, config_.ways, config_.shots,
                                    config_.batch_per_class, rng_);
  for (int id : ep.class_ids) {
    if (!train_ids_.contains(id)) throw DataError("train: sampled a held-out class");
  }
  if (observer_) observer_(ep);

  StepRecord record;
  try {
    const EpisodeTensors tensors = EpisodeTensors::from(dataset_, ep);
    params_.zero_grad();
    const LossResult r = episode_nll(params_, config_.model, tensors, Mode::train);
    record.loss = r.loss.item();
    if (!std::isfinite(record.loss)) throw NumericError("train: non-finite loss");
    backward(r.loss);
    adam_step(params_, adam_, config_.adam);
  } catch (const NumericError& e) {
    Checkpoint diag;
    diag.config_text = config_text_;
    diag.config_hash = config_hash_;
    diag.episode = episode_;
    diag.rng_state = rng_text(rng_before);
    diag.params = params_;
    diag.params.batchnorm_stats() = stats_before;
    diag.optimizer = adam_before;
    rng_ = rng_before;
    params_.batchnorm_stats() = stats_before;
    adam_ = adam_before;
    throw NumericAbort("numeric failure at episode " + std::to_string(episode_ + 1) + ": " + e.what(),
                       std::move(diag));
  }
  ++episode_;
  record.step = episode_;
  if (config_.eval_every > 0 && episode_ % config_.eval_every == 0) {
    record.eval_accuracy = evaluate_held_out(eval_threads_).accuracy;
  }
  return record;
}

void Trainer::run(const std::function<void(const StepRecord&)>& on_step) {
  run_until(config_.episodes_total, on_step);
}

void Trainer::run_until(std::uint64_t episode,
                        const std::function<void(const StepRecord&)>& on_step) {
  const std::uint64_t target = std::min<std::uint64_t>(episode, config_.episodes_total);
  while (episode_ < target) {
    const StepRecord r = step();
    if (on_step) on_step(r);
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.config_text = config_text_;
  ck.config_hash = config_hash_;
  ck.episode = episode_;
  ck.rng_state = rng_text(rng_);
  ck.params = params_;
  ck.optimizer = adam_;
  return ck;
}

EvalReport Trainer::evaluate_held_out(std::size_t threads) const {
  EvalOptions options;
  options.ways = config_.ways;
  options.shots = config_.shots;
  options.batch_per_class = config_.batch_per_class;
  options.episodes = config_.eval_episodes;
  options.seed = config_.seed ^ kEvalSeedSalt;
  options.threads = threads;
  return evaluate(params_, config_.model, dataset_, split_.test_class_ids, options);
}

}  // namespace matchkit
