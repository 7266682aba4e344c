// SPDX-License-Identifier: Apache-2.0
#include "matchkit/gradcheck.hpp"

#include <cmath>
#include <random>

#include "matchkit/error.hpp"
#include "matchkit/pipeline.hpp"

namespace matchkit {

GradCheckReport gradcheck(ModelParams& params, const std::function<Tensor(ModelParams&)>& loss,
                          double step, double tolerance) {
  if (!(step > 0.0)) throw ConfigError("gradcheck: step must be positive");
  params.zero_grad();
  {
    EnableGradGuard grad_on;
    backward(loss(params));
  }
  GradCheckReport report;
  report.passed = true;
  for (auto& [name, tensor] : params.tensors()) {
    const std::size_t n = tensor.numel();
    std::vector<double> analytic(n, 0.0);
    if (tensor.has_grad()) {
      auto g = tensor.grad();
      analytic.assign(g.begin(), g.end());
    }
    std::vector<double> numeric(n);
    {
      NoGradGuard no_grad;
      for (std::size_t i = 0; i < n; ++i) {
        const double original = tensor.leaf_data()[i];
        tensor.leaf_data()[i] = original + step;
        const double up = loss(params).item();
        tensor.leaf_data()[i] = original - step;
        const double down = loss(params).item();
        tensor.leaf_data()[i] = original;
        numeric[i] = (up - down) / (2.0 * step);
      }
    }
    double diff = 0.0;
    double na = 0.0;
    double nn = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nn += numeric[i] * numeric[i];
    }
    const double denom = std::max(std::sqrt(na), std::sqrt(nn));
    GroupError group{name, n, denom > 0.0 ? std::sqrt(diff) / denom : 0.0};
    if (report.worst_group.empty() || group.relative_error > report.max_error) {
      report.max_error = group.relative_error;
      report.worst_group = name;
    }
    if (!(group.relative_error <= tolerance)) report.passed = false;
    report.groups.push_back(std::move(group));
  }
  params.zero_grad();
  return report;
}

GradCheckReport gradcheck_episode(const EpisodeGradCheckOptions& options) {
  if (options.dim == 0 || options.ways < 2 || options.shots == 0 || options.batch_per_class == 0) {
    throw ConfigError("gradcheck: dim, shots and batch_per_class must be positive and ways >= 2");
  }
  ModelConfig config;
  config.encoder = options.encoder;
  if (options.encoder == EncoderKind::mlp) {
    config.mlp = MlpEmbedConfig{options.dim, {2 * options.dim}, options.dim};
  } else {
    config.conv = options.conv;
  }
  config.fce = FceConfig{options.fce, options.fce_steps};
  config.validate();
  ModelParams params = init_params(config, options.seed);

  Rng rng(options.seed + 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Shape in_shape = config.input_shape();
  const auto random_inputs = [&](std::size_t rows) {
    Shape shape{rows};
    shape.insert(shape.end(), in_shape.begin(), in_shape.end());
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = normal(rng);
    return Tensor(shape, std::move(v));
  };
  EpisodeTensors episode;
  episode.ways = options.ways;
  for (std::size_t c = 0; c < options.ways; ++c) {
    for (std::size_t s = 0; s < options.shots; ++s) episode.support_labels.push_back(static_cast<int>(c));
    for (std::size_t b = 0; b < options.batch_per_class; ++b) episode.batch_labels.push_back(static_cast<int>(c));
  }
  episode.support_inputs = random_inputs(episode.support_labels.size());
  episode.batch_inputs = random_inputs(episode.batch_labels.size());

  return gradcheck(
      params,
      [&](ModelParams& p) { return episode_nll(p, config, episode, Mode::train).loss; },
      options.step, options.tolerance);
}

}  // namespace matchkit
