// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "matchkit/error.hpp"
#include "matchkit/ops.hpp"
#include "matchkit/optimizer.hpp"

using namespace matchkit;

namespace {

void set_grad(ModelParams& p, const std::string& name, const std::vector<double>& g) {
  p.at(name).zero_grad();
  Tensor loss = sum(mul(p.at(name), Tensor(p.at(name).shape(), g)));
  backward(loss);
}

}  // namespace

TEST(Adam, MatchesHandOracleOverSeveralSteps) {
  ModelParams p;
  p.add("w", Tensor({3}, {0.5, -1.0, 2.0}, true));
  AdamConfig cfg;
  cfg.lr = 0.01;
  AdamState state;
  const std::vector<std::vector<double>> grads{{1.0, -2.0, 0.0}, {0.5, 3.0, 1e-3}, {-1.0, 0.0, 4.0}};
  std::vector<double> w{0.5, -1.0, 2.0}, m(3, 0.0), v(3, 0.0);
  for (std::size_t t = 0; t < grads.size(); ++t) {
    set_grad(p, "w", grads[t]);
    adam_step(p, state, cfg);
    for (std::size_t i = 0; i < 3; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grads[t][i];
      v[i] = 0.999 * v[i] + 0.001 * grads[t][i] * grads[t][i];
      const double mh = m[i] / (1 - std::pow(0.9, double(t + 1)));
      const double vh = v[i] / (1 - std::pow(0.999, double(t + 1)));
      w[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
      EXPECT_NEAR(p.at("w").at(i), w[i], 1e-15);
    }
  }
  EXPECT_EQ(state.step, 3u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ModelParams p;
  p.add("w", Tensor({2}, {0.0, 0.0}, true));
  AdamState s;
  set_grad(p, "w", {5.0, -0.01});
  adam_step(p, s, AdamConfig{});
  EXPECT_NEAR(p.at("w").at(0), -1e-3, 1e-10);
  EXPECT_NEAR(p.at("w").at(1), 1e-3, 1e-8);
}

TEST(Adam, MissingGradientIsZero) {
  ModelParams p;
  p.add("a", Tensor({1}, {1.0}, true));
  p.add("b", Tensor({1}, {1.0}, true));
  AdamState s;
  set_grad(p, "a", {1.0});
  p.at("b").zero_grad();
  adam_step(p, s, AdamConfig{});
  EXPECT_EQ(p.at("b").at(0), 1.0);
  EXPECT_LT(p.at("a").at(0), 1.0);
}

TEST(Adam, NonFiniteGradientThrowsWithoutUpdating) {
  ModelParams p;
  p.add("w", Tensor({1}, {1e-300}, true));
  const double big = std::numeric_limits<double>::max();
  backward(sum(scale(scale(p.at("w"), big), 2.0)));
  ASSERT_TRUE(std::isinf(p.at("w").grad()[0]));
  AdamState s;
  EXPECT_THROW(adam_step(p, s, AdamConfig{}), NumericError);
  EXPECT_EQ(p.at("w").at(0), 1e-300);
  EXPECT_EQ(s.step, 0u);
}

TEST(Adam, ConfigValidation) {
  AdamConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lr = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = AdamConfig{};
  c.beta1 = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = AdamConfig{};
  c.epsilon = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}
