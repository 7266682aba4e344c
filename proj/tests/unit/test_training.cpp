// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>

#include "matchkit/checkpoint.hpp"
#include "matchkit/error.hpp"
#include "matchkit/pipeline.hpp"
#include "matchkit/training.hpp"

using namespace matchkit;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.model.encoder = EncoderKind::mlp;
  c.model.mlp = MlpEmbedConfig{16, {32}, 16};
  c.ways = 5;
  c.shots = 1;
  c.batch_per_class = 2;
  c.episodes_total = 40;
  c.eval_every = 0;
  c.seed = 11;
  return c;
}

struct Fixture {
  ClassDataset data = gen_synthetic(20, 16, 0.3, 4);
  SplitSpec split = split_classes(data, 14, 2);
};

std::vector<double> losses(Trainer& t, std::uint64_t until) {
  std::vector<double> out;
  t.run_until(until, [&](const StepRecord& r) { out.push_back(r.loss); });
  return out;
}

}  // namespace

TEST(Training, OneStepChangesEveryGradientCarryingTensor) {
  Fixture f;
  Trainer t(small_config(), f.data, f.split);
  const ModelParams before = t.params();
  const StepRecord r = t.step();
  EXPECT_EQ(r.step, 1u);
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_FALSE(r.eval_accuracy.has_value());
  for (const auto& [name, tensor] : t.params().tensors()) {
    EXPECT_NE(std::vector<double>(tensor.data().begin(), tensor.data().end()),
              std::vector<double>(before.at(name).data().begin(), before.at(name).data().end()))
        << name;
  }
}

TEST(Training, SameSeedGivesIdenticalLossCurve) {
  Fixture f;
  Trainer a(small_config(), f.data, f.split);
  Trainer b(small_config(), f.data, f.split);
  const auto curve = losses(a, 40);
  EXPECT_EQ(curve, losses(b, 40));
  EXPECT_TRUE(a.params().identical(b.params()));
  TrainConfig other = small_config();
  other.seed = 12;
  Trainer c(other, f.data, f.split);
  EXPECT_NE(losses(c, 40), curve);
}

TEST(Training, ResumeIsBitExact) {
  Fixture f;
  Trainer straight(small_config(), f.data, f.split);
  const auto full = losses(straight, 40);

  Trainer first(small_config(), f.data, f.split);
  auto curve = losses(first, 17);
  const auto bytes = serialize_checkpoint(first.checkpoint());
  Trainer second(small_config(), f.data, f.split, deserialize_checkpoint(bytes));
  EXPECT_EQ(second.episode(), 17u);
  const auto rest = losses(second, 40);
  curve.insert(curve.end(), rest.begin(), rest.end());
  EXPECT_EQ(curve, full);
  EXPECT_TRUE(second.params().identical(straight.params()));
  EXPECT_TRUE(second.checkpoint().identical(straight.checkpoint()));
}

TEST(Training, ResumeRejectsDifferentConfiguration) {
  Fixture f;
  Trainer a(small_config(), f.data, f.split);
  a.step();
  TrainConfig changed = small_config();
  changed.adam.lr = 5e-4;
  EXPECT_THROW(Trainer(changed, f.data, f.split, a.checkpoint()), ConfigMismatchError);
}

TEST(Training, NonFiniteInputAbortsWithDiagnostic) {
  Fixture f;
  for (int id : f.split.train_class_ids) {
    if (id % 3 == 0) {
      for (auto& e : f.data.classes[static_cast<std::size_t>(id)].examples) {
        e[5] = std::numeric_limits<double>::quiet_NaN();
      }
    }
  }
  TrainConfig cfg = small_config();
  cfg.episodes_total = 1000;
  Trainer t(cfg, f.data, f.split);
  std::uint64_t failed_at = 0;
  ModelParams last_good;
  try {
    for (;;) {
      last_good = t.params();
      t.step();
    }
  } catch (const NumericAbort& e) {
    failed_at = t.episode();
    EXPECT_EQ(e.diagnostic().episode, failed_at);
    EXPECT_TRUE(e.diagnostic().params.identical(last_good));
    EXPECT_TRUE(t.params().identical(last_good));
    EXPECT_TRUE(e.diagnostic().identical(t.checkpoint()));
  }
  ASSERT_LT(failed_at, 1000u);
  EXPECT_THROW(t.step(), NumericAbort);
  EXPECT_EQ(t.episode(), failed_at);
}

TEST(Training, ObserverOnlySeesTrainingClasses) {
  Fixture f;
  TrainConfig cfg = small_config();
  cfg.episodes_total = 300;
  Trainer t(cfg, f.data, f.split);
  std::set<int> seen;
  t.set_episode_observer([&](const Episode& e) {
    for (const ExampleRef& r : e.support) seen.insert(r.class_id);
    for (const ExampleRef& r : e.batch) seen.insert(r.class_id);
  });
  t.run();
  const std::set<int> train(f.split.train_class_ids.begin(), f.split.train_class_ids.end());
  for (int id : seen) EXPECT_TRUE(train.contains(id)) << id;
  EXPECT_EQ(seen, train);
}

TEST(Training, InitialLossIsNearLogWays) {
  Fixture f;
  const TrainConfig cfg = small_config();
  ModelParams p = init_params(cfg.model, cfg.seed);
  Rng rng(8);
  double total = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Episode ep = sample_episode(f.data, f.split.train_class_ids, 5, 1, 2, rng);
    total += episode_nll(p, cfg.model, EpisodeTensors::from(f.data, ep)).loss.item();
  }
  EXPECT_NEAR(total / 100.0, std::log(5.0), 0.3);
}

TEST(Training, LearnsTheTrainingClasses) {
  ClassDataset data = gen_synthetic(40, 16, 0.3, 4);
  const SplitSpec split = split_classes(data, 30, 2);
  TrainConfig cfg = small_config();
  cfg.model.mlp = MlpEmbedConfig{16, {64}, 64};
  cfg.episodes_total = 2000;
  Trainer t(cfg, data, split);
  EvalOptions o;
  o.episodes = 500;
  const double before = evaluate(t.params(), cfg.model, data, split.train_class_ids, o).accuracy;
  const auto curve = losses(t, 2000);
  const double after = evaluate(t.params(), cfg.model, data, split.train_class_ids, o).accuracy;
  double early = 0, late = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    early += curve[i];
    late += curve[curve.size() - 1 - i];
  }
  EXPECT_LT(late, early);
  EXPECT_GT(after, before + 0.1);
}

TEST(Training, MoreShotsDoNotHurt) {
  ClassDataset data = gen_synthetic(40, 16, 0.5, 9);
  const SplitSpec split = split_classes(data, 30, 1);
  TrainConfig cfg = small_config();
  cfg.episodes_total = 300;
  Trainer t(cfg, data, split);
  t.run();
  EvalOptions o;
  o.episodes = 2000;
  o.shots = 1;
  const double one = evaluate(t.params(), cfg.model, data, split.test_class_ids, o).accuracy;
  o.shots = 5;
  const double five = evaluate(t.params(), cfg.model, data, split.test_class_ids, o).accuracy;
  EXPECT_GE(five, one - 0.01);
}

TEST(Training, PeriodicEvaluationAndMetricsLine) {
  Fixture f;
  TrainConfig cfg = small_config();
  cfg.episodes_total = 6;
  cfg.eval_every = 3;
  cfg.eval_episodes = 20;
  Trainer t(cfg, f.data, f.split);
  std::vector<StepRecord> records;
  t.run([&](const StepRecord& r) { records.push_back(r); });
  ASSERT_EQ(records.size(), 6u);
  for (const StepRecord& r : records) EXPECT_EQ(r.eval_accuracy.has_value(), r.step % 3 == 0);
  EXPECT_EQ(t.evaluate_held_out().accuracy, *records[5].eval_accuracy);
  EXPECT_EQ(format_metrics_line(StepRecord{12, 1.5, std::nullopt}), "12\t1.500000\t-");
  EXPECT_EQ(format_metrics_line(StepRecord{3, 0.25, 0.875}), "3\t0.250000\t0.8750");
  EXPECT_TRUE(t.finished());
  EXPECT_THROW(t.step(), ConfigError);
}

TEST(Training, RejectsInvalidSetups) {
  Fixture f;
  TrainConfig cfg = small_config();
  cfg.ways = 1;
  EXPECT_THROW(Trainer(cfg, f.data, f.split), ConfigError);
  cfg = small_config();
  cfg.model.mlp.input_dim = 8;
  EXPECT_THROW(Trainer(cfg, f.data, f.split), ConfigError);
  cfg = small_config();
  cfg.ways = 15;
  EXPECT_THROW(Trainer(cfg, f.data, f.split), ConfigError);
  cfg = small_config();
  cfg.eval_every = 10;
  cfg.ways = 7;
  EXPECT_THROW(Trainer(cfg, f.data, f.split), ConfigError);
}

TEST(Training, CanonicalTextCoversConfiguration) {
  TrainConfig a = small_config();
  TrainConfig b = small_config();
  EXPECT_EQ(a.canonical_text(), b.canonical_text());
  b.model.fce.enabled = true;
  EXPECT_NE(a.canonical_text(), b.canonical_text());
  b = small_config();
  b.adam.beta2 = 0.99;
  EXPECT_NE(a.canonical_text(), b.canonical_text());
  EXPECT_NE(a.canonical_text().find("train.seed=11\n"), std::string::npos);
}
