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

#ifndef CBMX_ATTRIBUTION_HPP_
#define CBMX_ATTRIBUTION_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include "cbmx/image.hpp"
#include "cbmx/lrp.hpp"
#include "cbmx/network.hpp"
#include "cbmx/tensor.hpp"

namespace cbmx::attribution {

// Empty rules select lrp::DefaultRuleMap on the canonized network.
struct LrpMethod {
  lrp::RuleMap rules;
};
struct GradientMethod {};
// Empty baseline means all zeros.
struct IntegratedGradientsMethod {
  std::size_t steps = 50;
  Tensor baseline;
};
using Method = std::variant<LrpMethod, GradientMethod, IntegratedGradientsMethod>;

struct SmoothGradOptions {
  std::size_t n_samples = 25;
  double sigma = 0.2;
  std::uint64_t seed = 0;
};

struct AttributionConfig {
  Method method = LrpMethod{};
  std::optional<SmoothGradOptions> smoothgrad;
};

struct AttributionMap {
  Tensor values;
  std::size_t target_index = 0;
  std::string method;
};

std::string MethodLabel(const Method& method);
void ValidateConfig(const AttributionConfig& config, const Shape& input_shape);

// The network without trailing Sigmoid/Softmax layers; attributions explain
// the raw score of the target.
nn::Network ScoreNetwork(const nn::Network& network);

// Raw signed gradient of the target score.
AttributionMap GradientSaliency(const nn::Network& network, const Tensor& input,
                                std::size_t target_index);

// Midpoint Riemann sum over `steps` points of the straight path from the
// baseline to the input.
AttributionMap IntegratedGradients(const nn::Network& network, const Tensor& input,
                                   std::size_t target_index, std::size_t steps,
                                   const Tensor& baseline);

AttributionMap LrpAttribution(const nn::Network& network, const Tensor& input,
                              std::size_t target_index, const lrp::RuleMap& rules);

AttributionMap ComputeMethod(const Method& method, const nn::Network& network,
                             const Tensor& input, std::size_t target_index);

// Mean of the base method over n inputs x + N(0, sigma^2), drawn in order
// from Rng(seed).
AttributionMap SmoothGrad(const Method& base, const nn::Network& network, const Tensor& input,
                          std::size_t target_index, std::size_t n_samples, double sigma,
                          std::uint64_t seed);

AttributionMap Compute(const AttributionConfig& config, const nn::Network& network,
                       const Tensor& input, std::size_t target_index);

// S(h,w) = sum_c max(values[c,h,w], 0) for [C,H,W]; max(v, 0) for [H,W].
Tensor ChannelReduce(const Tensor& map);

enum class Normalization {
  kMaxAbs,     // value / max|value|
  kUnitClip,   // value clipped to [-1, 1]
};

// Positive values shade towards red, negative towards blue, zero is white.
// [C,H,W] maps are collapsed by a signed channel sum; rank-1 maps render as a
// strip of `segment_width`-pixel segments.
RgbImage RenderSignedMap(const Tensor& map, Normalization normalization = Normalization::kMaxAbs,
                         std::size_t segment_width = 8, std::size_t strip_height = 16);

// |value| / max|value| as 8-bit gray over the positive-part reduced grid.
GrayImage RenderMagnitude(const Tensor& map);

}  // namespace cbmx::attribution

#endif  // CBMX_ATTRIBUTION_HPP_
