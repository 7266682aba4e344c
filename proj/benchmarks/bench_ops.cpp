// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <numeric>
#include <random>

#include "matchkit/encoders.hpp"
#include "matchkit/episodes.hpp"
#include "matchkit/fce.hpp"
#include "matchkit/ops.hpp"
#include "matchkit/pipeline.hpp"
#include "matchkit/tensor.hpp"
#include "matchkit/training.hpp"

using namespace matchkit;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = n(rng);
  return Tensor(std::move(shape), std::move(v));
}

void BM_Conv2d(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto s = static_cast<std::size_t>(state.range(1));
  const Tensor x = random_tensor({15, c, s, s}, 1);
  const Tensor k = random_tensor({64, c, 3, 3}, 2);
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k));
}
BENCHMARK(BM_Conv2d)->Args({1, 28})->Args({64, 14})->Args({64, 7});

void BM_EmbedConv(benchmark::State& state) {
  ModelConfig cfg;
  cfg.encoder = EncoderKind::conv;
  const ModelParams p = init_params(cfg, 1);
  const Tensor images = random_tensor({static_cast<std::size_t>(state.range(0)), 1, 28, 28}, 3);
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(embed_conv(p, cfg.conv, images));
}
BENCHMARK(BM_EmbedConv)->Arg(15)->Arg(60);

void BM_TrainStepConv(benchmark::State& state) {
  ClassDataset ds;
  ds.example_shape = {1, 28, 28};
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (int c = 0; c < 20; ++c) {
    ClassEntry e{"c" + std::to_string(c), {}};
    for (int i = 0; i < 5; ++i) {
      std::vector<double> img(784);
      for (double& v : img) v = u(rng);
      e.examples.push_back(img);
    }
    ds.classes.push_back(e);
  }
  TrainConfig tc;
  tc.model.encoder = EncoderKind::conv;
  tc.model.fce.enabled = state.range(0) != 0;
  tc.episodes_total = 1u << 30;
  tc.eval_every = 0;
  Trainer t(tc, ds, split_classes(ds, 15, 1));
  for (auto _ : state) benchmark::DoNotOptimize(t.step());
}
BENCHMARK(BM_TrainStepConv)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_FceQuery(benchmark::State& state) {
  ModelConfig cfg;
  cfg.mlp = MlpEmbedConfig{64, {}, 64};
  cfg.fce.enabled = true;
  const ModelParams p = init_params(cfg, 5);
  const Tensor f = random_tensor({10, 64}, 6);
  const Tensor g = random_tensor({static_cast<std::size_t>(state.range(0)), 64}, 7);
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(embed_query_fce(p, f, g, 5));
}
BENCHMARK(BM_FceQuery)->Arg(5)->Arg(25);

void BM_FceSupport(benchmark::State& state) {
  ModelConfig cfg;
  cfg.mlp = MlpEmbedConfig{64, {}, 64};
  cfg.fce.enabled = true;
  const ModelParams p = init_params(cfg, 5);
  const Tensor g = random_tensor({static_cast<std::size_t>(state.range(0)), 64}, 8);
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(embed_support_fce(p, g));
}
BENCHMARK(BM_FceSupport)->Arg(5)->Arg(25);

}  // namespace

BENCHMARK_MAIN();
