// SPDX-License-Identifier: Apache-2.0
#include "matchkit/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

#include "matchkit/error.hpp"
#include "matchkit/ops.hpp"

namespace matchkit {

std::string EvalReport::summary() const {
  char buf[96];
  std::snprintf(buf, sizeof buf, "acc=%.4f ±%.4f n=%zu", accuracy, ci95, n_episodes);
  return buf;
}

std::uint64_t episode_seed(std::uint64_t seed, std::size_t index) {
  // splitmix64 of (seed, index)
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(index) + 1;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

EvalReport evaluate(const EpisodePredictor& predictor, const ClassDataset& dataset,
                    std::span<const int> pool, const EvalOptions& options) {
  if (options.episodes == 0) throw ConfigError("evaluate: episodes must be positive");
  if (options.ways > pool.size()) {
    throw ConfigError("evaluate: " + std::to_string(options.ways) + "-way task needs at least " +
                      std::to_string(options.ways) + " classes, pool has " +
                      std::to_string(pool.size()));
  }
  EvalReport report;
  report.ways = options.ways;
  report.shots = options.shots;
  report.n_episodes = options.episodes;
  report.episode_accuracy.assign(options.episodes, 0.0);

  const auto run_one = [&](std::size_t i) {
    const Episode ep = sample_episode_seeded(dataset, pool, options.ways, options.shots,
                                             options.batch_per_class,
                                             episode_seed(options.seed, i));
    const EpisodeTensors t = EpisodeTensors::from(dataset, ep);
    const std::vector<int> pred = predictor(t);
    if (pred.size() != t.batch_labels.size()) {
      throw ShapeError("evaluate: predictor returned " + std::to_string(pred.size()) +
                       " labels for " + std::to_string(t.batch_labels.size()) + " queries");
    }
    std::size_t hits = 0;
    for (std::size_t j = 0; j < pred.size(); ++j) hits += pred[j] == t.batch_labels[j] ? 1 : 0;
    report.episode_accuracy[i] = static_cast<double>(hits) / static_cast<double>(pred.size());
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, options.episodes));
  if (threads == 1) {
    NoGradGuard no_grad;
    for (std::size_t i = 0; i < options.episodes; ++i) run_one(i);
  } else {
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool_threads;
    for (std::size_t t = 0; t < threads; ++t) {
      pool_threads.emplace_back([&, t] {
        try {
          NoGradGuard no_grad;
          for (std::size_t i = t; i < options.episodes; i += threads) run_one(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      });
    }
    for (auto& th : pool_threads) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  double total = 0.0;
  for (double a : report.episode_accuracy) total += a;
  const double n = static_cast<double>(options.episodes);
  report.accuracy = total / n;
  if (options.episodes > 1) {
    double ss = 0.0;
    for (double a : report.episode_accuracy) ss += (a - report.accuracy) * (a - report.accuracy);
    report.ci95 = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return report;
}

EpisodePredictor matching_predictor(const ModelParams& params, const ModelConfig& config,
                                    AttentionSpec attention) {
  return [&params, config, attention](const EpisodeTensors& episode) {
    NoGradGuard no_grad;
    return predict_batch(episode_probs(params, config, episode, attention));
  };
}

EpisodePredictor pixel_predictor(AttentionSpec attention) {
  return [attention](const EpisodeTensors& episode) {
    NoGradGuard no_grad;
    const std::size_t k = episode.support_inputs.dim(0);
    const std::size_t m = episode.batch_inputs.dim(0);
    const std::size_t d = episode.support_inputs.numel() / k;
    const SupportSet support =
        SupportSet::make(reshape(episode.support_inputs, {k, d}), episode.support_labels, episode.ways);
    const Tensor queries = reshape(episode.batch_inputs, {m, d});
    return predict_batch(classify_batch(attend_batch(queries, support, attention), support));
  };
}

EvalReport evaluate(const ModelParams& params, const ModelConfig& config,
                    const ClassDataset& dataset, std::span<const int> pool,
                    const EvalOptions& options, AttentionSpec attention) {
  return evaluate(matching_predictor(params, config, attention), dataset, pool, options);
}

}  // namespace matchkit
