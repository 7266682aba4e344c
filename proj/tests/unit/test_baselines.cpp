// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <numeric>

#include "matchkit/baselines.hpp"
#include "matchkit/error.hpp"

using namespace matchkit;

namespace {

ModelConfig mlp_model() {
  ModelConfig c;
  c.mlp = MlpEmbedConfig{16, {32}, 16};
  return c;
}

std::vector<int> all_ids(const ClassDataset& ds) {
  std::vector<int> ids(ds.num_classes());
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

EpisodeTensors one_episode(const ClassDataset& ds, std::size_t ways, std::size_t shots,
                           std::uint64_t seed) {
  return EpisodeTensors::from(ds, sample_episode_seeded(ds, all_ids(ds), ways, shots, 2, seed));
}

}  // namespace

TEST(Baseline, LearnsTwoClassProblem) {
  const ClassDataset ds = gen_synthetic(2, 16, 0.3, 1);
  BaselineConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 8;
  const BaselineClassifier m = train_baseline_classifier(ds, all_ids(ds), mlp_model(), cfg);
  EXPECT_GT(m.final_train_accuracy, 0.95);
  EXPECT_EQ(baseline_train_accuracy(m, ds), m.final_train_accuracy);
  EXPECT_EQ(m.class_ids, (std::vector<int>{0, 1}));
  EXPECT_EQ(m.params.at(kHeadWeight).shape(), (Shape{16, 2}));
}

TEST(Baseline, FeaturesDropTheHead) {
  const ClassDataset ds = gen_synthetic(3, 16, 0.3, 1);
  BaselineConfig cfg;
  cfg.epochs = 1;
  const BaselineClassifier m = train_baseline_classifier(ds, all_ids(ds), mlp_model(), cfg);
  const ModelParams f = m.features();
  EXPECT_FALSE(f.contains(kHeadWeight));
  EXPECT_FALSE(f.contains(kHeadBias));
  EXPECT_EQ(f.tensors().size() + 2, m.params.tensors().size());
  EXPECT_EQ(f.at("mlp.layer0.weight").data()[3], m.params.at("mlp.layer0.weight").data()[3]);
}

TEST(Baseline, StepCapAndDeterminism) {
  const ClassDataset ds = gen_synthetic(5, 16, 0.3, 2);
  BaselineConfig cfg;
  cfg.epochs = 100;
  cfg.max_steps = 7;
  const BaselineClassifier a = train_baseline_classifier(ds, all_ids(ds), mlp_model(), cfg);
  const BaselineClassifier b = train_baseline_classifier(ds, all_ids(ds), mlp_model(), cfg);
  EXPECT_EQ(a.steps, 7u);
  EXPECT_TRUE(a.params.identical(b.params));
  cfg.seed = 2;
  EXPECT_FALSE(train_baseline_classifier(ds, all_ids(ds), mlp_model(), cfg).params.identical(a.params));
}

TEST(Baseline, CosineFeaturesTransferToHeldOutClasses) {
  const ClassDataset ds = gen_synthetic(30, 16, 0.3, 3);
  const SplitSpec split = split_classes(ds, 20, 1);
  BaselineConfig cfg;
  cfg.epochs = 10;
  const BaselineClassifier m = train_baseline_classifier(ds, split.train_class_ids, mlp_model(), cfg);
  EvalOptions o;
  o.episodes = 300;
  const double acc = evaluate(baseline_cosine_predictor(m.features(), mlp_model()), ds,
                              split.test_class_ids, o).accuracy;
  const double pixels = evaluate(pixel_predictor(), ds, split.test_class_ids, o).accuracy;
  RecordProperty("feature_accuracy", std::to_string(acc));
  RecordProperty("pixel_accuracy", std::to_string(pixels));
  EXPECT_GT(acc, 0.2 + 0.1);
}

TEST(FineTune, ZeroStepsKeepsEncoder) {
  const ClassDataset ds = gen_synthetic(5, 16, 0.3, 4);
  const ModelParams p = init_params(mlp_model(), 3);
  const EpisodeTensors ep = one_episode(ds, 5, 1, 9);
  FineTuneOptions o;
  o.steps = 0;
  o.head = FineTuneHead::cosine;
  const FineTuned t = fine_tune(p, mlp_model(), ep.support_inputs, ep.support_labels, 5, o);
  EXPECT_TRUE(t.params.identical(p));
  o.head = FineTuneHead::softmax;
  const FineTuned s = fine_tune(p, mlp_model(), ep.support_inputs, ep.support_labels, 5, o);
  EXPECT_TRUE(s.params.contains(kHeadWeight));
  EXPECT_EQ(s.params.at(kHeadWeight).shape(), (Shape{16, 5}));
}

TEST(FineTune, FitsTheSupportSetWithin100Steps) {
  const ClassDataset ds = gen_synthetic(10, 16, 0.5, 5);
  const ModelParams p = init_params(mlp_model(), 3);
  const ModelParams original = p;
  for (FineTuneHead head : {FineTuneHead::softmax, FineTuneHead::cosine}) {
    for (std::size_t shots : {1u, 5u}) {
      const EpisodeTensors ep = one_episode(ds, 5, shots, 10 + shots);
      FineTuneOptions o;
      o.head = head;
      o.steps = 100;
      o.lr = 1e-2;
      const FineTuned t = fine_tune(p, mlp_model(), ep.support_inputs, ep.support_labels, 5, o);
      EXPECT_EQ(t.support_accuracy, 1.0) << (head == FineTuneHead::cosine ? "cosine" : "softmax")
                                         << " shots=" << shots;
      EXPECT_EQ(predict_fine_tuned(t, mlp_model(), ep).size(), ep.batch_labels.size());
    }
  }
  EXPECT_TRUE(p.identical(original));
}

TEST(FineTune, PredictorsAreDeterministic) {
  const ClassDataset ds = gen_synthetic(10, 16, 0.5, 6);
  const ModelParams p = init_params(mlp_model(), 3);
  EvalOptions o;
  o.episodes = 5;
  const auto a = evaluate(baseline_softmax_predictor(p, mlp_model(), 20), ds, all_ids(ds), o);
  const auto b = evaluate(baseline_softmax_predictor(p, mlp_model(), 20), ds, all_ids(ds), o);
  EXPECT_EQ(a.episode_accuracy, b.episode_accuracy);
  const auto c = evaluate(baseline_cosine_predictor(p, mlp_model(), 5), ds, all_ids(ds), o);
  const auto d = evaluate(baseline_cosine_predictor(p, mlp_model(), 5), ds, all_ids(ds), o);
  EXPECT_EQ(c.episode_accuracy, d.episode_accuracy);
}
