// SPDX-License-Identifier: Apache-2.0
#include "matchkit/pipeline.hpp"

#include "matchkit/error.hpp"
#include "matchkit/fce.hpp"
#include "matchkit/ops.hpp"

namespace matchkit {

EpisodeTensors EpisodeTensors::from(const ClassDataset& dataset, const Episode& episode) {
  EpisodeTensors t;
  t.support_inputs = gather_examples(dataset, episode.support);
  t.support_labels = episode.support_labels;
  t.batch_inputs = gather_examples(dataset, episode.batch);
  t.batch_labels = episode.batch_labels;
  t.ways = episode.ways;
  return t;
}

namespace {

void check_episode(const EpisodeTensors& e) {
  if (e.support_labels.empty()) throw ConfigError("episode: empty support set");
  if (e.batch_labels.empty()) throw ConfigError("episode: empty batch");
  if (e.support_inputs.dim(0) != e.support_labels.size() ||
      e.batch_inputs.dim(0) != e.batch_labels.size()) {
    throw ShapeError("episode: inputs and labels disagree in length");
  }
}

EpisodeEmbeddings contextualise(const ModelParams& params, const ModelConfig& config,
                                Tensor support, Tensor batch) {
  if (!config.fce.enabled) return EpisodeEmbeddings{std::move(support), std::move(batch)};
  Tensor g = embed_support_fce(params, support);
  Tensor f = embed_query_fce(params, batch, g, config.fce.steps);
  return EpisodeEmbeddings{std::move(g), std::move(f)};
}

template <typename Encode>
EpisodeEmbeddings embed_with(const ModelParams& params, const ModelConfig& config,
                             const EpisodeTensors& episode, Encode&& encode) {
  check_episode(episode);
  const std::size_t k = episode.support_labels.size();
  const std::size_t m = episode.batch_labels.size();
  const Tensor joint = encode(concat({episode.support_inputs, episode.batch_inputs}, 0));
  return contextualise(params, config, slice_rows(joint, 0, k), slice_rows(joint, k, k + m));
}

Tensor probs_from(const EpisodeEmbeddings& e, const EpisodeTensors& episode,
                  const AttentionSpec& attention) {
  const SupportSet support = SupportSet::make(e.support, episode.support_labels, episode.ways);
  return classify_batch(attend_batch(e.batch, support, attention), support);
}

}  // namespace

EpisodeEmbeddings embed_episode(ModelParams& params, const ModelConfig& config,
                                const EpisodeTensors& episode, Mode mode) {
  return embed_with(params, config, episode,
                    [&](const Tensor& x) { return embed(params, config, x, mode); });
}

EpisodeEmbeddings embed_episode(const ModelParams& params, const ModelConfig& config,
                                const EpisodeTensors& episode) {
  return embed_with(params, config, episode,
                    [&](const Tensor& x) { return embed(params, config, x); });
}

Tensor episode_probs(ModelParams& params, const ModelConfig& config, const EpisodeTensors& episode,
                     Mode mode, const AttentionSpec& attention) {
  return probs_from(embed_episode(params, config, episode, mode), episode, attention);
}

Tensor episode_probs(const ModelParams& params, const ModelConfig& config,
                     const EpisodeTensors& episode, const AttentionSpec& attention) {
  return probs_from(embed_episode(params, config, episode), episode, attention);
}

std::vector<ClassDistribution> forward_fce(ModelParams& params, const ModelConfig& config,
                                           const EpisodeTensors& episode, Mode mode) {
  if (!config.fce.enabled) throw ConfigError("forward_fce: full context embeddings are disabled");
  const Tensor probs = episode_probs(params, config, episode, mode);
  std::vector<ClassDistribution> out;
  out.reserve(probs.dim(0));
  for (std::size_t i = 0; i < probs.dim(0); ++i) out.push_back(ClassDistribution{row(probs, i)});
  return out;
}

LossResult episode_nll(ModelParams& params, const ModelConfig& config,
                       const EpisodeTensors& episode, Mode mode, const AttentionSpec& attention) {
  if (mode == Mode::train && attention.kind != AttentionKind::softmax_cosine) {
    throw ConfigError("episode_nll: training needs softmax-cosine attention");
  }
  LossResult r;
  r.probs = episode_probs(params, config, episode, mode, attention);
  r.loss = nll_rows(r.probs, episode.batch_labels, &r.clamped_log);
  return r;
}

double batch_accuracy(const Tensor& probs, const std::vector<int>& labels) {
  const std::vector<int> pred = predict_batch(probs);
  if (pred.size() != labels.size()) throw ShapeError("batch_accuracy: label count mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace matchkit
