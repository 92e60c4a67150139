/*
 * Copyright 2026 The cbmx Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cmath>

#include "cbmx/cbm.hpp"
#include "cbmx/error.hpp"
#include "cbmx/synthetic.hpp"
#include "support.hpp"

namespace cbmx::cbm {
namespace {

using nn::Linear;
using nn::Network;

Network IdentityLinear(std::size_t k) {
  Tensor w({k, k});
  for (std::size_t i = 0; i < k; ++i) w[i * k + i] = 1.0;
  return {{Linear{w, Tensor({k})}}, {k}};
}

// g maps a [1,1,k] image to k logits with zero weights, so every logit is 0.
CbmModel ZeroLogitModel(std::size_t k, bool sigmoid_between) {
  CbmModel m;
  m.g = {{nn::Flatten{}, Linear{Tensor({k, k}), Tensor({k})}}, {1, 1, k}};
  m.f = IdentityLinear(k);
  m.sigmoid_between = sigmoid_between;
  for (std::size_t i = 0; i < k; ++i) {
    m.concept_names.push_back("c" + std::to_string(i));
    m.class_names.push_back("y" + std::to_string(i));
  }
  return m;
}

TrainingSet SmallImageSet(std::uint64_t seed) {
  synth::GeneratorConfig config;
  config.height = config.width = 16;
  config.n_parts = 1;
  config.n_colors = 2;
  config.n_classes = 2;
  config.samples = 40;
  config.seed = seed;
  const synth::Dataset ds = synth::GenerateDataset(config);
  return synth::ToTrainingSet(ds.train);
}

CbmModel SmallModel(bool sigmoid_between) {
  synth::GeneratorConfig config;
  config.height = config.width = 16;
  config.n_parts = 1;
  config.n_colors = 2;
  config.n_classes = 2;
  return MakeDefaultModel({3, 16, 16}, synth::ConceptNames(config), {"plain", "head_visible"},
                          sigmoid_between, 3);
}

TEST(PredictTest, SigmoidBetweenFeedsHalves) {
  const Prediction p = Predict(ZeroLogitModel(3, true), Tensor({1, 1, 3}, {1, 2, 3}));
  EXPECT_EQ(p.bottleneck.vector(), (std::vector<double>{0.5, 0.5, 0.5}));
  EXPECT_EQ(p.concepts.presence, (std::vector<bool>{true, true, true}));
  EXPECT_EQ(p.class_logits.vector(), (std::vector<double>{0.5, 0.5, 0.5}));
  for (double v : p.class_probs.values()) EXPECT_NEAR(v, 1.0 / 3, 1e-15);
}

TEST(PredictTest, WithoutSigmoidFeedsRawLogits) {
  const Prediction p = Predict(ZeroLogitModel(3, false), Tensor({1, 1, 3}, {1, 2, 3}));
  EXPECT_EQ(p.bottleneck.vector(), (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(p.concepts.values.vector(), (std::vector<double>{0.5, 0.5, 0.5}));
}

TEST(PredictTest, SigmoidBottleneckStaysInUnitInterval) {
  Rng rng(4);
  CbmModel m = ZeroLogitModel(4, true);
  auto& lin = std::get<Linear>(m.g.layers[1]);
  lin.weights = testing::RandomTensor(rng, {4, 4}, -50, 50);
  for (int trial = 0; trial < 50; ++trial) {
    const Prediction p = Predict(m, testing::RandomTensor(rng, {1, 1, 4}, -10, 10));
    for (double v : p.bottleneck.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(PredictTest, ShapeMismatchIsReported) {
  try {
    Predict(ZeroLogitModel(3, true), Tensor({1, 1, 4}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
}

TEST(InterveneTest, EmptyOverridesGiveZeroDelta) {
  const CbmModel m = ZeroLogitModel(2, true);
  const InterventionResult r = Intervene(m, Tensor({2}, {0.2, 0.9}), {});
  EXPECT_EQ(r.delta.vector(), (std::vector<double>{0, 0}));
}

TEST(InterveneTest, IdentityClassifierSeesOverride) {
  const CbmModel m = ZeroLogitModel(2, true);
  const InterventionResult r = Intervene(m, Tensor({2}, {1, 0}), {{1, 1.0}});
  EXPECT_EQ(r.new_logits.vector(), (std::vector<double>{1, 1}));
  EXPECT_NEAR(r.new_probs[0], 0.5, 1e-15);
  EXPECT_NEAR(r.delta[1], 0.5 - 1 / (1 + std::exp(1.0)), 1e-15);
}

TEST(InterveneTest, DeadColumnLeavesProbabilitiesUnchanged) {
  CbmModel m = ZeroLogitModel(3, true);
  auto& w = std::get<Linear>(m.f.layers[0]).weights;
  for (std::size_t r = 0; r < 3; ++r) w[r * 3 + 2] = 0.0;
  const InterventionResult r = Intervene(m, Tensor({3}, {0.3, 0.6, 0.1}), {{2, 1.0}});
  EXPECT_EQ(r.new_probs, r.old_probs);
}

TEST(InterveneTest, IsIdempotent) {
  Rng rng(6);
  CbmModel m = ZeroLogitModel(4, true);
  m.f = testing::RandomMlp(rng, 4, 5, 4, true);
  const Tensor c = testing::RandomTensor(rng, {4}, 0, 1);
  const std::map<std::size_t, double> overrides{{0, 1.0}, {3, 0.0}};
  const InterventionResult once = Intervene(m, c, overrides);
  const InterventionResult twice = Intervene(m, once.bottleneck, overrides);
  EXPECT_EQ(once.bottleneck, twice.bottleneck);
  EXPECT_EQ(once.new_probs, twice.new_probs);
}

TEST(InterveneTest, RejectsBadOverrides) {
  const CbmModel m = ZeroLogitModel(2, true);
  try {
    Intervene(m, Tensor({2}), {{2, 1.0}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIndexOutOfRange);
  }
  EXPECT_THROW(Intervene(m, Tensor({2}), {{0, NAN}}), Error);
}

TEST(TrainTest, ClassModelFitsSeparableOneHotConcepts) {
  Network f = MakeClassNetwork(4, 4);
  Rng rng(1);
  InitializeNetwork(f, rng);
  std::vector<Tensor> inputs;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 4; ++i) {
    Tensor c({4});
    c[i] = 1.0;
    inputs.push_back(c);
    labels.push_back(i);
  }
  TrainConfig config;
  config.epochs = 200;
  config.learning_rate = 0.1;
  config.batch_size = 4;
  TrainClassModel(f, inputs, labels, config, rng);
  std::vector<Tensor> logits;
  for (const Tensor& c : inputs) logits.push_back(nn::Predict(f, c));
  EXPECT_EQ(Top1Accuracy(logits, labels), 1.0);
}

TEST(TrainTest, ConvexLossIsNonIncreasingWithSmallSteps) {
  Network f = MakeClassNetwork(3, 2);
  Rng rng(2);
  InitializeNetwork(f, rng);
  std::vector<Tensor> inputs;
  std::vector<std::size_t> labels;
  for (int i = 0; i < 8; ++i) {
    inputs.push_back(testing::RandomTensor(rng, {3}, 0, 1));
    labels.push_back(i % 2);
  }
  TrainConfig config;
  config.epochs = 30;
  config.batch_size = 8;
  config.learning_rate = 0.01;
  config.momentum = 0.0;
  const History h = TrainClassModel(f, inputs, labels, config, rng);
  for (std::size_t i = 1; i < h.size(); ++i) EXPECT_LE(h[i].loss, h[i - 1].loss + 1e-15);
}

TEST(TrainTest, FixedSeedGivesIdenticalWeights) {
  const TrainingSet data = SmallImageSet(5);
  for (Regime regime : {Regime::kIndependent, Regime::kSequential, Regime::kJoint}) {
    TrainConfig config;
    config.regime = regime;
    config.epochs = 2;
    config.seed = 9;
    const TrainResult a = Train(SmallModel(true), data, config);
    const TrainResult b = Train(SmallModel(true), data, config);
    EXPECT_EQ(a.model, b.model) << RegimeName(regime);
  }
}

TEST(TrainTest, IndependentPartsNeverSeeTheOtherInput) {
  const TrainingSet data = SmallImageSet(6);
  TrainConfig config;
  config.epochs = 2;
  config.seed = 1;
  const TrainResult base = Train(SmallModel(true), data, config);

  TrainingSet relabeled = data;
  for (std::size_t& y : relabeled.labels) y = 1 - y;
  EXPECT_EQ(Train(SmallModel(true), relabeled, config).model.g, base.model.g);

  TrainingSet blank = data;
  for (Tensor& x : blank.images) x = Tensor(x.shape());
  EXPECT_EQ(Train(SmallModel(true), blank, config).model.f, base.model.f);
}

TEST(TrainTest, JointWithZeroLambdaIgnoresConceptLabels) {
  const TrainingSet data = SmallImageSet(7);
  TrainConfig config;
  config.regime = Regime::kJoint;
  config.lambda = 0.0;
  config.epochs = 8;
  config.seed = 2;
  const TrainResult base = Train(SmallModel(true), data, config);

  TrainingSet flipped = data;
  for (auto& row : flipped.concepts) {
    for (double& c : row) c = 1.0 - c;
  }
  const TrainResult other = Train(SmallModel(true), flipped, config);
  EXPECT_EQ(other.model, base.model);
  EXPECT_LT(base.history.back().loss, base.history.front().loss);
}

TEST(TrainTest, RejectsBadInput) {
  TrainConfig config;
  config.lambda = -1;
  EXPECT_THROW(ValidateTrainConfig(config), Error);
  config = TrainConfig{};
  config.epochs = 0;
  EXPECT_THROW(ValidateTrainConfig(config), Error);
  try {
    Train(SmallModel(true), TrainingSet{}, TrainConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmpty);
  }
}

TEST(AccuracyTest, ConceptBinaryAccuracy) {
  const std::vector<Tensor> perfect{Tensor({2}, {0.9, 0.1})};
  const std::vector<std::vector<double>> labels{{1, 0}};
  EXPECT_EQ(ConceptBinaryAccuracy(perfect, labels), 1.0);
  const std::vector<Tensor> halves{Tensor({2}, {0.5, 0.5})};
  EXPECT_EQ(ConceptBinaryAccuracy(halves, std::vector<std::vector<double>>{{1, 1}}), 1.0);
  const std::vector<Tensor> three{Tensor({2}, {0.9, 0.1}), Tensor({2}, {0.2, 0.8})};
  EXPECT_EQ(ConceptBinaryAccuracy(three, std::vector<std::vector<double>>{{1, 0}, {0, 0}}), 0.75);
  EXPECT_THROW(ConceptBinaryAccuracy(three, labels), Error);
}

TEST(AccuracyTest, Top1WithTies) {
  const std::vector<Tensor> logits{Tensor({2}, {1, 1}), Tensor({2}, {0, 3})};
  EXPECT_EQ(Top1Accuracy(logits, std::vector<std::size_t>{0, 1}), 1.0);
  EXPECT_EQ(Top1Accuracy(logits, std::vector<std::size_t>{1, 0}), 0.0);
  EXPECT_THROW(Top1Accuracy(logits, std::vector<std::size_t>{0}), Error);
}

TEST(ModelTest, ArityMismatchIsRejected) {
  CbmModel m = ZeroLogitModel(3, true);
  m.f = IdentityLinear(4);
  EXPECT_THROW(ValidateModel(m), Error);
}

}  // namespace
}  // namespace cbmx::cbm
