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

#include "cbmx/attribution.hpp"
#include "cbmx/autodiff.hpp"
#include "cbmx/error.hpp"
#include "support.hpp"

namespace cbmx::attribution {
namespace {

using nn::Linear;
using nn::Network;
using testing::RandomTensor;

Network LinearNet(std::vector<double> w) {
  const std::size_t n = w.size();
  return {{Linear{Tensor({1, n}, std::move(w)), Tensor({1}, {0.3})}}, {n}};
}

double Score(const Network& net, const Tensor& x, std::size_t target) {
  return nn::Predict(net, x)[target];
}

TEST(GradientSaliencyTest, LinearModelGivesWeights) {
  const Network net = LinearNet({1, -2});
  const AttributionMap m = GradientSaliency(net, Tensor({2}, {5, 7}), 0);
  EXPECT_EQ(m.values.vector(), (std::vector<double>{1, -2}));
}

TEST(GradientSaliencyTest, DeadReluRegionGivesZeroMap) {
  Network net{{Linear{Tensor({1, 2}, {1, 1}), Tensor({1}, {-10})}, nn::ReLU{}}, {2}};
  const AttributionMap m = GradientSaliency(net, Tensor({2}, {1, 2}), 0);
  EXPECT_EQ(m.values.vector(), (std::vector<double>{0, 0}));
}

TEST(GradientSaliencyTest, IgnoresTrailingSigmoid) {
  Network net = LinearNet({2, 3});
  net.layers.emplace_back(nn::Sigmoid{});
  const AttributionMap m = GradientSaliency(net, Tensor({2}, {4, 4}), 0);
  EXPECT_EQ(m.values.vector(), (std::vector<double>{2, 3}));
}

TEST(IntegratedGradientsTest, LinearModelIsExactForAnyStepCount) {
  const Network net = LinearNet({0.5, -1.5, 2});
  const Tensor x({3}, {2, 4, -1});
  for (std::size_t steps : {1, 3, 50}) {
    const AttributionMap m = IntegratedGradients(net, x, 0, steps, Tensor());
    EXPECT_EQ(m.values.vector(), (std::vector<double>{1, -6, -2})) << steps;
  }
}

TEST(IntegratedGradientsTest, InputEqualToBaselineGivesZero) {
  Rng rng(3);
  const Network net = testing::RandomMlp(rng, 4, 8, 2, true);
  const Tensor x = RandomTensor(rng, {4});
  const AttributionMap m = IntegratedGradients(net, x, 1, 16, x);
  EXPECT_EQ(m.values.vector(), std::vector<double>(4, 0.0));
}

// Midpoint Riemann sum written out against an independent gradient oracle.
TEST(IntegratedGradientsTest, MatchesMidpointSumOfFiniteDifferences) {
  Rng rng(11);
  const Network net = testing::RandomMlp(rng, 3, 6, 2, true);
  const Tensor x = RandomTensor(rng, {3});
  const std::size_t m = 4;
  const AttributionMap ig = IntegratedGradients(net, x, 0, m, Tensor());
  Tensor expected({3});
  for (std::size_t t = 1; t <= m; ++t) {
    Tensor point = x;
    for (double& v : point.values()) v *= (t - 0.5) / m;
    const Tensor g = autodiff::FiniteDifferenceGradient(net, point, autodiff::SelectOutput{0});
    for (std::size_t i = 0; i < 3; ++i) expected[i] += x[i] * g[i] / m;
  }
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(ig.values[i], expected[i], 1e-7);
}

// Along the straight path from zero, hidden unit j of Linear-ReLU-Linear is
// active where alpha (w_j . x) + b_j > 0, so both the exact integral and the
// midpoint sum have closed forms in terms of the active set.
TEST(IntegratedGradientsTest, CompletenessAgainstClosedFormOnReluNets) {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const Network net = testing::RandomMlp(rng, 5, 12, 3, true);
    const Tensor x = RandomTensor(rng, {5}, -2, 2);
    const auto& hidden = std::get<Linear>(net.layers[0]);
    const auto& out = std::get<Linear>(net.layers[2]);
    const std::size_t m = 512, target = 1;
    double midpoint = 0, exact = 0, jumps = 0;
    for (std::size_t j = 0; j < 12; ++j) {
      double wx = 0;
      for (std::size_t i = 0; i < 5; ++i) wx += hidden.weights[j * 5 + i] * x[i];
      const double b = hidden.bias[j], v = out.weights[target * 12 + j];
      std::size_t active = 0;
      for (std::size_t t = 1; t <= m; ++t) active += (t - 0.5) / m * wx + b > 0;
      midpoint += v * wx * static_cast<double>(active) / m;
      const double lo = std::max(0.0, 0.0 * wx + b), hi = std::max(0.0, wx + b);
      exact += v * (hi - lo);
      jumps += std::abs(v * wx);
    }
    const double delta = Score(net, x, target) - Score(net, Tensor({5}), target);
    const double sum = IntegratedGradients(net, x, target, m, Tensor()).values.Sum();
    EXPECT_NEAR(exact, delta, 1e-12);
    EXPECT_NEAR(sum, midpoint, 1e-12);
    EXPECT_LE(std::abs(sum - delta), jumps / m);
  }
}

TEST(IntegratedGradientsTest, BiasFreeReluNetsAreExact) {
  Rng rng(88);
  for (int trial = 0; trial < 10; ++trial) {
    const Network net = testing::RandomMlp(rng, 4, 8, 2, false);
    const Tensor x = RandomTensor(rng, {4});
    const double delta = Score(net, x, 0) - Score(net, Tensor({4}), 0);
    const double sum = IntegratedGradients(net, x, 0, 8, Tensor()).values.Sum();
    EXPECT_NEAR(sum, delta, 1e-12);
  }
}

TEST(SmoothGradTest, ZeroSigmaIsTheBaseMethod) {
  Rng rng(5);
  const Network net = testing::RandomMlp(rng, 4, 6, 2, true);
  const Tensor x = RandomTensor(rng, {4});
  const AttributionMap base = GradientSaliency(net, x, 1);
  const AttributionMap smooth = SmoothGrad(GradientMethod{}, net, x, 1, 7, 0.0, 99);
  EXPECT_EQ(smooth.values, base.values);
}

TEST(SmoothGradTest, LinearModelIgnoresNoise) {
  const Network net = LinearNet({0.25, -0.5});
  const AttributionMap m = SmoothGrad(GradientMethod{}, net, Tensor({2}, {1, 1}), 0, 9, 0.7, 1);
  EXPECT_EQ(m.values.vector(), (std::vector<double>{0.25, -0.5}));
}

TEST(SmoothGradTest, FixedSeedIsBitwiseReproducible) {
  Rng rng(8);
  const Network net = testing::RandomConvNet(rng, true, true);
  const Tensor x = RandomTensor(rng, net.input_shape);
  for (const Method& method : std::vector<Method>{LrpMethod{}, GradientMethod{},
                                                  IntegratedGradientsMethod{8, Tensor()}}) {
    const AttributionMap a = SmoothGrad(method, net, x, 2, 5, 0.2, 42);
    const AttributionMap b = SmoothGrad(method, net, x, 2, 5, 0.2, 42);
    EXPECT_EQ(a.values, b.values);
    const AttributionMap c = SmoothGrad(method, net, x, 2, 5, 0.2, 43);
    EXPECT_NE(a.values, c.values);
  }
}

TEST(ComputeTest, ValidatesConfiguration) {
  const Network net = LinearNet({1, 1});
  const Tensor x({2}, {1, 1});
  EXPECT_THROW(Compute({IntegratedGradientsMethod{0, Tensor()}, std::nullopt}, net, x, 0), Error);
  EXPECT_THROW(Compute({IntegratedGradientsMethod{4, Tensor({3})}, std::nullopt}, net, x, 0),
               Error);
  EXPECT_THROW(Compute({GradientMethod{}, SmoothGradOptions{0, 0.2, 0}}, net, x, 0), Error);
  EXPECT_THROW(Compute({GradientMethod{}, SmoothGradOptions{3, -1.0, 0}}, net, x, 0), Error);
  EXPECT_THROW(Compute({GradientMethod{}, std::nullopt}, net, x, 1), Error);
  EXPECT_NO_THROW(Compute({GradientMethod{}, SmoothGradOptions{3, 0.1, 0}}, net, x, 0));
}

TEST(ComputeTest, LrpOnLinearModelIsContributionShare) {
  Network net{{Linear{Tensor({1, 2}, {1, 3}), Tensor({1})}}, {2}};
  const AttributionMap m = Compute({LrpMethod{}, std::nullopt}, net, Tensor({2}, {2, 1}), 0);
  EXPECT_EQ(m.values.vector(), (std::vector<double>{2, 3}));
}

TEST(ChannelReduceTest, PositivePartChannelSum) {
  const Tensor r = ChannelReduce(Tensor({2, 1, 2}, {1, -1, -2, 3}));
  EXPECT_EQ(r.shape(), (Shape{1, 2}));
  EXPECT_EQ(r.vector(), (std::vector<double>{1, 3}));
}

TEST(ChannelReduceTest, AllNegativeMapGivesZeroGrid) {
  const Tensor r = ChannelReduce(Tensor({3, 2, 2}, std::vector<double>(12, -0.5)));
  EXPECT_EQ(r.vector(), std::vector<double>(4, 0.0));
}

TEST(ChannelReduceTest, SingleChannelNonNegativeMapIsUnchanged) {
  const Tensor m({1, 2, 2}, {0, 1, 2, 3});
  EXPECT_EQ(ChannelReduce(m).vector(), m.vector());
}

TEST(ChannelReduceTest, OtherRanksAreRejected) {
  EXPECT_THROW(ChannelReduce(Tensor({4})), Error);
}

TEST(RenderTest, AllZeroMapIsWhite) {
  const RgbImage img = RenderSignedMap(Tensor({1, 3, 3}));
  EXPECT_EQ(img.height, 3u);
  for (std::uint8_t p : img.pixels) EXPECT_EQ(p, 255);
}

TEST(RenderTest, SinglePositivePixelIsPureRed) {
  Tensor m({1, 2, 2});
  m[3] = 0.7;
  const RgbImage img = RenderSignedMap(m);
  EXPECT_EQ(img.pixels[9], 255);
  EXPECT_EQ(img.pixels[10], 0);
  EXPECT_EQ(img.pixels[11], 0);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(img.pixels[i], 255);
}

TEST(RenderTest, NegativeShadesBlue) {
  const RgbImage img = RenderSignedMap(Tensor({1, 1, 2}, {-1, 0.5}));
  EXPECT_EQ(img.pixels[0], 0);
  EXPECT_EQ(img.pixels[1], 0);
  EXPECT_EQ(img.pixels[2], 255);
  EXPECT_EQ(img.pixels[3], 255);
  EXPECT_LT(img.pixels[4], 255);
  EXPECT_EQ(img.pixels[4], img.pixels[5]);
}

TEST(RenderTest, InvariantToPositiveScaling) {
  Rng rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor m = RandomTensor(rng, {3, 4, 5});
    Tensor scaled = m;
    for (double& v : scaled.values()) v *= 2.0;
    EXPECT_EQ(RenderSignedMap(m), RenderSignedMap(scaled));
  }
}

TEST(RenderTest, VectorRendersAsSegmentedStrip) {
  const RgbImage img = RenderSignedMap(Tensor({3}, {1, 0, -1}), Normalization::kMaxAbs, 4, 2);
  EXPECT_EQ(img.width, 12u);
  EXPECT_EQ(img.height, 2u);
  auto pixel = [&](std::size_t r, std::size_t c) {
    const std::size_t o = 3 * (r * img.width + c);
    return std::array<int, 3>{img.pixels[o], img.pixels[o + 1], img.pixels[o + 2]};
  };
  EXPECT_EQ(pixel(1, 3), (std::array<int, 3>{255, 0, 0}));
  EXPECT_EQ(pixel(0, 5), (std::array<int, 3>{255, 255, 255}));
  EXPECT_EQ(pixel(1, 11), (std::array<int, 3>{0, 0, 255}));
}

}  // namespace
}  // namespace cbmx::attribution
