// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "matchkit/error.hpp"
#include "matchkit/fce.hpp"
#include "matchkit/ops.hpp"
#include "matchkit/pipeline.hpp"
#include "test_support.hpp"

using namespace matchkit;
using test::random_tensor;

namespace {

using Vec = std::vector<double>;

struct OracleState {
  Vec h, c;
};

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Plain-loop LSTM step on one row.
OracleState lstm_oracle(const ModelParams& p, const std::string& prefix, const Vec& x, const Vec& state,
                        const Vec& cell) {
  Vec z = x;
  z.insert(z.end(), state.begin(), state.end());
  const std::size_t hd = cell.size();
  auto gate = [&](const char* g) {
    const auto w = p.at(prefix + ".W_" + g).data();
    const auto b = p.at(prefix + ".b_" + g).data();
    Vec out(hd);
    for (std::size_t r = 0; r < hd; ++r) {
      double acc = b[r];
      for (std::size_t t = 0; t < z.size(); ++t) acc += w[r * z.size() + t] * z[t];
      out[r] = acc;
    }
    return out;
  };
  const Vec i = gate("i"), f = gate("f"), o = gate("o"), g = gate("g");
  OracleState s{Vec(hd), Vec(hd)};
  for (std::size_t r = 0; r < hd; ++r) {
    s.c[r] = sig(f[r]) * cell[r] + sig(i[r]) * std::tanh(g[r]);
    s.h[r] = sig(o[r]) * std::tanh(s.c[r]);
  }
  return s;
}

Vec row_of(const Tensor& t, std::size_t i) {
  const std::size_t d = t.dim(1);
  return Vec(t.data().begin() + static_cast<std::ptrdiff_t>(i * d),
             t.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
}

std::vector<Vec> support_oracle(const ModelParams& p, const Tensor& raw) {
  const std::size_t k = raw.dim(0), d = raw.dim(1);
  std::vector<Vec> fwd(k), bwd(k), out(k);
  OracleState s{Vec(d, 0.0), Vec(d, 0.0)};
  for (std::size_t i = 0; i < k; ++i) {
    s = lstm_oracle(p, kFceForwardCell, row_of(raw, i), s.h, s.c);
    fwd[i] = s.h;
  }
  s = OracleState{Vec(d, 0.0), Vec(d, 0.0)};
  for (std::size_t i = k; i-- > 0;) {
    s = lstm_oracle(p, kFceBackwardCell, row_of(raw, i), s.h, s.c);
    bwd[i] = s.h;
  }
  for (std::size_t i = 0; i < k; ++i) {
    out[i] = Vec(d);
    const Vec g = row_of(raw, i);
    for (std::size_t j = 0; j < d; ++j) out[i][j] = fwd[i][j] + bwd[i][j] + g[j];
  }
  return out;
}

Vec query_oracle(const ModelParams& p, const Vec& f, const std::vector<Vec>& g, std::size_t steps) {
  const std::size_t d = f.size();
  Vec h = f, c(d, 0.0);
  for (std::size_t s = 0; s < steps; ++s) {
    Vec logits(g.size());
    double mx = -1e300;
    for (std::size_t i = 0; i < g.size(); ++i) {
      logits[i] = 0.0;
      for (std::size_t j = 0; j < d; ++j) logits[i] += h[j] * g[i][j];
      mx = std::max(mx, logits[i]);
    }
    double z = 0.0;
    for (double& l : logits) z += (l = std::exp(l - mx));
    Vec r(d, 0.0);
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) r[j] += logits[i] / z * g[i][j];
    Vec state = h;
    state.insert(state.end(), r.begin(), r.end());
    const OracleState next = lstm_oracle(p, kFceQueryCell, f, state, c);
    for (std::size_t j = 0; j < d; ++j) h[j] = next.h[j] + f[j];
    c = next.c;
  }
  return h;
}

ModelParams fce_params(std::size_t d, std::uint64_t seed, double scale = 1.0) {
  ModelParams p;
  Rng rng(seed);
  add_fce_params(p, d, rng);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& [name, t] : p.tensors())
    for (double& v : t.leaf_data()) v = n(rng);
  return p;
}

void zero_all(ModelParams& p) {
  for (auto& [name, t] : p.tensors()) std::fill(t.leaf_data().begin(), t.leaf_data().end(), 0.0);
}

}  // namespace

TEST(LstmStep, MatchesOracle) {
  const ModelParams p = fce_params(3, 1);
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor({1, 3}, rng), h = random_tensor({1, 3}, rng), c = random_tensor({1, 3}, rng);
  const LstmState s = lstm_step(p, kFceForwardCell, x, h, c);
  const OracleState o = lstm_oracle(p, kFceForwardCell, row_of(x, 0), row_of(h, 0), row_of(c, 0));
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_NEAR(s.h.at(j), o.h[j], 1e-14);
    EXPECT_NEAR(s.c.at(j), o.c[j], 1e-14);
  }
}

TEST(SupportFce, ZeroWeightsReduceToSkipConnection) {
  ModelParams p = fce_params(4, 3);
  zero_all(p);
  std::mt19937_64 rng(4);
  const Tensor raw = random_tensor({5, 4}, rng);
  const Tensor g = embed_support_fce(p, raw);
  for (std::size_t i = 0; i < raw.numel(); ++i) EXPECT_EQ(g.at(i), raw.at(i));
}

TEST(SupportFce, SingleElementCountsOneStepTwice) {
  ModelParams p = fce_params(3, 5);
  // Same weights in both directions.
  for (auto& [name, t] : p.tensors()) {
    if (name.starts_with(kFceBackwardCell)) {
      const std::string twin = std::string(kFceForwardCell) + name.substr(std::string(kFceBackwardCell).size());
      std::copy(p.at(twin).data().begin(), p.at(twin).data().end(), t.leaf_data().begin());
    }
  }
  std::mt19937_64 rng(6);
  const Tensor raw = random_tensor({1, 3}, rng);
  const Tensor g = embed_support_fce(p, raw);
  const LstmState s = lstm_step(p, kFceForwardCell, raw, Tensor::zeros({1, 3}), Tensor::zeros({1, 3}));
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(g.at(j), 2 * s.h.at(j) + raw.at(j), 1e-15);
}

TEST(SupportFce, MatchesUnrolledOracle) {
  const ModelParams p = fce_params(4, 7);
  std::mt19937_64 rng(8);
  const Tensor raw = random_tensor({3, 4}, rng);
  const Tensor g = embed_support_fce(p, raw);
  const auto expect = support_oracle(p, raw);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(g.at(i * 4 + j), expect[i][j], 1e-10);
}

TEST(SupportFce, OrderSensitive) {
  const ModelParams p = fce_params(4, 9, 0.5);
  std::mt19937_64 rng(10);
  const Tensor raw = random_tensor({3, 4}, rng);
  const Tensor swapped = stack({row(raw, 2), row(raw, 1), row(raw, 0)});
  const Tensor a = embed_support_fce(p, raw);
  const Tensor b = embed_support_fce(p, swapped);
  // Row 1 stays in place but sees different context.
  double diff = 0.0;
  for (std::size_t j = 0; j < 4; ++j) diff += std::abs(a.at(4 + j) - b.at(4 + j));
  EXPECT_GT(diff, 1e-6);
}

TEST(SupportFce, EmptyIsRejected) {
  const ModelParams p = fce_params(2, 1);
  EXPECT_THROW(embed_support_fce(p, Tensor::zeros({2})), ShapeError);
}

TEST(QueryFce, ZeroStepsReturnsInput) {
  const ModelParams p = fce_params(3, 11);
  std::mt19937_64 rng(12);
  const Tensor f = random_tensor({3}, rng);
  const Tensor h = embed_query_fce(p, f, random_tensor({4, 3}, rng), 0);
  ASSERT_EQ(h.shape(), f.shape());
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(h.at(j), f.at(j));
}

TEST(QueryFce, ZeroWeightsPinToInputForAnyK) {
  ModelParams p = fce_params(3, 13);
  zero_all(p);
  std::mt19937_64 rng(14);
  const Tensor f = random_tensor({3}, rng);
  const Tensor g = random_tensor({4, 3}, rng);
  for (std::size_t k : {1u, 2u, 7u}) {
    const Tensor h = embed_query_fce(p, f, g, k);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(h.at(j), f.at(j));
  }
}

TEST(QueryFce, MatchesUnrolledOracle) {
  const ModelParams p = fce_params(3, 15);
  std::mt19937_64 rng(16);
  const Tensor f = random_tensor({3}, rng);
  const Tensor g = random_tensor({2, 3}, rng);
  const Tensor h = embed_query_fce(p, f, g, 2);
  const Vec expect = query_oracle(p, Vec(f.data().begin(), f.data().end()), {row_of(g, 0), row_of(g, 1)}, 2);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(h.at(j), expect[j], 1e-10);
}

TEST(QueryFce, BatchedRowsAreIndependentQueries) {
  const ModelParams p = fce_params(4, 17, 0.5);
  std::mt19937_64 rng(18);
  const Tensor f = random_tensor({3, 4}, rng);
  const Tensor g = random_tensor({5, 4}, rng);
  const Tensor all = embed_query_fce(p, f, g, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const Tensor one = embed_query_fce(p, reshape(row(f, i), {4}), g, 3);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(all.at(i * 4 + j), one.at(j), 1e-13);
  }
}

TEST(QueryFce, ReadWeightsAreNormalisedAtEveryStep) {
  const ModelParams p = fce_params(5, 19);
  std::mt19937_64 rng(20);
  std::vector<Tensor> reads;
  const Tensor h = embed_query_fce(p, random_tensor({2, 5}, rng), random_tensor({6, 5}, rng), 5, &reads);
  EXPECT_EQ(h.shape(), (Shape{2, 5}));
  ASSERT_EQ(reads.size(), 5u);
  for (const Tensor& a : reads) {
    ASSERT_EQ(a.shape(), (Shape{2, 6}));
    for (std::size_t i = 0; i < 2; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < 6; ++j) total += a.at(i * 6 + j);
      EXPECT_NEAR(total, 1.0, 1e-9);
    }
  }
}

TEST(QueryFce, DimensionMismatchIsRejected) {
  const ModelParams p = fce_params(3, 1);
  EXPECT_THROW(embed_query_fce(p, Tensor::zeros({4}), Tensor::zeros({2, 3}), 1), ShapeError);
}

namespace {

EpisodeTensors random_episode(std::size_t ways, std::size_t dim, std::mt19937_64& rng) {
  EpisodeTensors e;
  e.ways = ways;
  for (std::size_t c = 0; c < ways; ++c) {
    e.support_labels.push_back(static_cast<int>(c));
    e.batch_labels.push_back(static_cast<int>(c));
    e.batch_labels.push_back(static_cast<int>(c));
  }
  e.support_inputs = random_tensor({ways, dim}, rng);
  e.batch_inputs = random_tensor({2 * ways, dim}, rng);
  return e;
}

}  // namespace

TEST(ForwardFce, ZeroRecurrentWeightsMatchPlainPipeline) {
  ModelConfig plain;
  plain.mlp = MlpEmbedConfig{6, {8}, 6};
  ModelConfig fce = plain;
  fce.fce = FceConfig{true, 3};
  ModelParams p = init_params(fce, 21);
  for (auto& [name, t] : p.tensors()) {
    if (name.starts_with("fce.")) std::fill(t.leaf_data().begin(), t.leaf_data().end(), 0.0);
  }
  std::mt19937_64 rng(22);
  const EpisodeTensors e = random_episode(3, 6, rng);
  const auto dists = forward_fce(p, fce, e, Mode::eval);
  const Tensor ref = episode_probs(std::as_const(p), plain, e);
  ASSERT_EQ(dists.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(dists[i].probs.at(c), ref.at(i * 3 + c), 1e-12);
}

TEST(ForwardFce, KZeroLeavesQueryEmbeddingsUnchanged) {
  ModelConfig plain;
  plain.mlp = MlpEmbedConfig{4, {}, 4};
  ModelConfig fce = plain;
  fce.fce = FceConfig{true, 0};
  const ModelParams p = init_params(fce, 23);
  std::mt19937_64 rng(24);
  const EpisodeTensors e = random_episode(2, 4, rng);
  const EpisodeEmbeddings a = embed_episode(p, fce, e);
  const EpisodeEmbeddings b = embed_episode(p, plain, e);
  for (std::size_t i = 0; i < a.batch.numel(); ++i) EXPECT_EQ(a.batch.at(i), b.batch.at(i));
}

TEST(ForwardFce, RequiresFceEnabled) {
  ModelConfig plain;
  plain.mlp = MlpEmbedConfig{4, {}, 4};
  ModelParams p = init_params(plain, 1);
  std::mt19937_64 rng(25);
  EXPECT_THROW(forward_fce(p, plain, random_episode(2, 4, rng), Mode::eval), ConfigError);
}

TEST(ForwardFce, DistributionsAreNormalised) {
  ModelConfig fce;
  fce.mlp = MlpEmbedConfig{5, {10}, 5};
  fce.fce = FceConfig{true, 2};
  ModelParams p = init_params(fce, 26);
  std::mt19937_64 rng(27);
  for (const auto& d : forward_fce(p, fce, random_episode(4, 5, rng), Mode::train)) {
    double total = 0.0;
    for (double v : d.probs.data()) total += v;
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}
