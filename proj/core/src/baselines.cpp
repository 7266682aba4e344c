// SPDX-License-Identifier: Apache-2.0
#include "matchkit/baselines.hpp"

#include <algorithm>
#include <numeric>
#include <utility>

#include "matchkit/error.hpp"
#include "matchkit/ops.hpp"

namespace matchkit {

namespace {

constexpr std::size_t kEvalChunk = 256;

ModelConfig plain_encoder(ModelConfig config) {
  config.fce.enabled = false;
  return config;
}

void add_head(ModelParams& params, std::size_t dim, std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w = Tensor::zeros({dim, classes}, true);
  fill_glorot_uniform(w.leaf_data(), dim, classes, rng);
  params.add(kHeadWeight, std::move(w));
  params.add(kHeadBias, Tensor::zeros({classes}, true));
}

Tensor head_logits(const ModelParams& params, const Tensor& features) {
  return add_row(matmul(features, params.at(kHeadWeight)), params.at(kHeadBias));
}

std::vector<int> argmax_rows(const Tensor& scores) { return predict_batch(scores); }

double accuracy_of(const std::vector<int>& pred, std::span<const int> labels) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
  return pred.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(pred.size());
}

Tensor self_matching_probs(const Tensor& emb, const std::vector<int>& labels, std::size_t ways) {
  const SupportSet support = SupportSet::make(emb, labels, ways);
  return classify_batch(attend_batch(emb, support, AttentionSpec{}), support);
}

}  // namespace

ModelParams BaselineClassifier::features() const {
  ModelParams out;
  for (const auto& [name, t] : params.tensors()) {
    if (name == kHeadWeight || name == kHeadBias) continue;
    out.add(name, t.clone());
  }
  out.batchnorm_stats() = params.batchnorm_stats();
  return out;
}

BaselineClassifier train_baseline_classifier(const ClassDataset& dataset,
                                             std::span<const int> train_ids,
                                             const ModelConfig& encoder,
                                             const BaselineConfig& config) {
  config.adam.validate();
  if (config.batch_size < 2) throw ConfigError("baseline: batch_size must be at least 2");
  if (train_ids.size() < 2) throw ConfigError("baseline: need at least two training classes");
  BaselineClassifier model;
  model.encoder = plain_encoder(encoder);
  if (dataset.example_shape != model.encoder.input_shape()) {
    throw ConfigError("baseline: dataset examples are " + shape_str(dataset.example_shape) +
                      " but the encoder expects " + shape_str(model.encoder.input_shape()));
  }
  model.class_ids.assign(train_ids.begin(), train_ids.end());
  model.params = init_params(model.encoder, config.seed);
  add_head(model.params, model.encoder.embedding_dim(), model.class_ids.size(), config.seed + 1);

  std::vector<ExampleRef> refs;
  std::vector<int> columns;
  for (std::size_t c = 0; c < model.class_ids.size(); ++c) {
    const int id = model.class_ids[c];
    if (id < 0 || static_cast<std::size_t>(id) >= dataset.num_classes()) {
      throw ConfigError("baseline: class id " + std::to_string(id) + " not in dataset");
    }
    const std::size_t n = dataset.classes[static_cast<std::size_t>(id)].examples.size();
    for (std::size_t i = 0; i < n; ++i) {
      refs.push_back(ExampleRef{id, static_cast<int>(i)});
      columns.push_back(static_cast<int>(c));
    }
  }

  Rng rng(config.seed ^ 0xba5e11eull);
  AdamState adam;
  std::vector<std::size_t> order(refs.size());
  std::vector<ExampleRef> batch_refs;
  std::vector<int> batch_labels;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start + 2 <= order.size(); start += config.batch_size) {
      if (config.max_steps > 0 && model.steps >= config.max_steps) break;
      const std::size_t end = std::min(start + config.batch_size, order.size());
      if (end - start < 2) break;
      batch_refs.clear();
      batch_labels.clear();
      for (std::size_t j = start; j < end; ++j) {
        batch_refs.push_back(refs[order[j]]);
        batch_labels.push_back(columns[order[j]]);
      }
      model.params.zero_grad();
      const Tensor x = gather_examples(dataset, batch_refs);
      const Tensor loss = softmax_cross_entropy(
          head_logits(model.params, embed(model.params, model.encoder, x, Mode::train)),
          batch_labels);
      backward(loss);
      adam_step(model.params, adam, config.adam);
      ++model.steps;
    }
  }
  model.final_train_accuracy = baseline_train_accuracy(model, dataset);
  return model;
}

double baseline_train_accuracy(const BaselineClassifier& model, const ClassDataset& dataset) {
  NoGradGuard no_grad;
  std::size_t hits = 0;
  std::size_t total = 0;
  std::vector<ExampleRef> chunk;
  std::vector<int> labels;
  const auto flush = [&] {
    if (chunk.empty()) return;
    const Tensor x = gather_examples(dataset, chunk);
    const auto pred = argmax_rows(head_logits(model.params, embed(model.params, model.encoder, x)));
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
    total += pred.size();
    chunk.clear();
    labels.clear();
  };
  for (std::size_t c = 0; c < model.class_ids.size(); ++c) {
    const int id = model.class_ids[c];
    const std::size_t n = dataset.classes[static_cast<std::size_t>(id)].examples.size();
    for (std::size_t i = 0; i < n; ++i) {
      chunk.push_back(ExampleRef{id, static_cast<int>(i)});
      labels.push_back(static_cast<int>(c));
      if (chunk.size() == kEvalChunk) flush();
    }
  }
  flush();
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

FineTuned fine_tune(const ModelParams& params, const ModelConfig& config,
                    const Tensor& support_inputs, const std::vector<int>& support_labels,
                    std::size_t ways, const FineTuneOptions& options) {
  EnableGradGuard grad_on;
  const ModelConfig encoder = plain_encoder(config);
  FineTuned tuned;
  tuned.head = options.head;
  tuned.ways = ways;
  tuned.params = ModelParams{};
  for (const auto& [name, t] : params.tensors()) {
    if (name == kHeadWeight || name == kHeadBias) continue;
    tuned.params.add(name, t.clone());
  }
  tuned.params.batchnorm_stats() = params.batchnorm_stats();
  if (options.head == FineTuneHead::softmax) {
    add_head(tuned.params, encoder.embedding_dim(), ways, options.seed);
  }

  AdamConfig adam_config;
  adam_config.lr = options.lr;
  adam_config.validate();
  AdamState adam;
  const auto support_probs_or_logits = [&]() {
    const Tensor emb = embed(std::as_const(tuned.params), encoder, support_inputs);
    if (options.head == FineTuneHead::softmax) return head_logits(tuned.params, emb);
    return self_matching_probs(emb, support_labels, ways);
  };
  for (std::size_t s = 0; s < options.steps; ++s) {
    tuned.params.zero_grad();
    const Tensor out = support_probs_or_logits();
    const Tensor loss = options.head == FineTuneHead::softmax
                            ? softmax_cross_entropy(out, support_labels)
                            : nll_rows(out, support_labels);
    backward(loss);
    adam_step(tuned.params, adam, adam_config);
  }
  tuned.params.zero_grad();
  NoGradGuard no_grad;
  tuned.support_accuracy = accuracy_of(argmax_rows(support_probs_or_logits()), support_labels);
  return tuned;
}

std::vector<int> predict_fine_tuned(const FineTuned& tuned, const ModelConfig& config,
                                    const EpisodeTensors& episode) {
  NoGradGuard no_grad;
  const ModelConfig encoder = plain_encoder(config);
  if (tuned.head == FineTuneHead::softmax) {
    return argmax_rows(head_logits(tuned.params, embed(tuned.params, encoder, episode.batch_inputs)));
  }
  return predict_batch(episode_probs(tuned.params, encoder, episode));
}

EpisodePredictor baseline_cosine_predictor(const ModelParams& features, const ModelConfig& config,
                                           std::size_t fine_tune_steps, double lr) {
  const ModelConfig encoder = plain_encoder(config);
  return [features, encoder, fine_tune_steps, lr](const EpisodeTensors& episode) {
    if (fine_tune_steps == 0) {
      NoGradGuard no_grad;
      return predict_batch(episode_probs(features, encoder, episode));
    }
    FineTuneOptions options;
    options.head = FineTuneHead::cosine;
    options.steps = fine_tune_steps;
    options.lr = lr;
    const FineTuned tuned =
        fine_tune(features, encoder, episode.support_inputs, episode.support_labels, episode.ways, options);
    return predict_fine_tuned(tuned, encoder, episode);
  };
}

EpisodePredictor baseline_softmax_predictor(const ModelParams& features, const ModelConfig& config,
                                            std::size_t fine_tune_steps, double lr) {
  const ModelConfig encoder = plain_encoder(config);
  return [features, encoder, fine_tune_steps, lr](const EpisodeTensors& episode) {
    FineTuneOptions options;
    options.head = FineTuneHead::softmax;
    options.steps = fine_tune_steps;
    options.lr = lr;
    const FineTuned tuned =
        fine_tune(features, encoder, episode.support_inputs, episode.support_labels, episode.ways, options);
    return predict_fine_tuned(tuned, encoder, episode);
  };
}

}  // namespace matchkit
