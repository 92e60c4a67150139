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

#ifndef CBMX_LRP_HPP_
#define CBMX_LRP_HPP_

// Layer-wise relevance propagation over sequential networks.
//
// For an affine map z_k = sum_j a_j w_jk + b_k the rules redistribute the
// relevance R_k of each output onto the inputs:
//
//   Zero:       R_j = sum_k a_j w_jk / z_k * R_k
//   Epsilon:    R_j = sum_k a_j w_jk / (z_k + eps * sign(z_k)) * R_k, sign(0) = +1
//   AlphaBeta:  R_j = sum_k (alpha (a_j w_jk)+ / z+_k - beta (a_j w_jk)- / z-_k) R_k
//               with z+_k = sum_j (a_j w_jk)+ + b_k+, likewise for z-_k
//
// The bias share of each output is reported as absorbed, never
// redistributed. The epsilon share and the relevance of outputs whose
// denominator is exactly zero are reported as rule-absorbed.

#include <cstddef>
#include <variant>
#include <vector>

#include "cbmx/network.hpp"
#include "cbmx/tensor.hpp"

namespace cbmx::lrp {

struct Zero {
  friend bool operator==(const Zero&, const Zero&) = default;
};
struct Epsilon {
  double epsilon = 1e-6;
  friend bool operator==(const Epsilon&, const Epsilon&) = default;
};
struct AlphaBeta {
  double alpha = 1.0;
  double beta = 0.0;
  friend bool operator==(const AlphaBeta&, const AlphaBeta&) = default;
};
// Parameter-free layers: identity for activations and flatten,
// winner-takes-all for max-pooling.
struct Passthrough {
  friend bool operator==(const Passthrough&, const Passthrough&) = default;
};

using Rule = std::variant<Zero, Epsilon, AlphaBeta, Passthrough>;
using RuleMap = std::vector<Rule>;

const char* RuleName(const Rule& rule);
void ValidateRule(const Rule& rule);

struct RuleResult {
  Tensor relevance_in;
  double bias_absorbed = 0.0;
  double rule_absorbed = 0.0;
};

// weights: [out, in] (the Linear layout), bias: [out] or empty.
RuleResult LinearRule(const Tensor& activations, const Tensor& weights, const Tensor& bias,
                      const Tensor& relevance_out, const Rule& rule);

RuleResult ConvRule(const nn::Conv2D& layer, const Tensor& activations,
                    const Tensor& relevance_out, const Rule& rule);

// Places each output relevance entirely at its recorded switch.
Tensor MaxPoolRule(const std::vector<std::size_t>& switches, const Tensor& relevance_out,
                   const Shape& input_shape);

struct RelevanceTrace {
  // relevance[l] is the relevance at the input of layer l; relevance[L] is
  // the seed at the network output.
  std::vector<Tensor> relevance;
  std::vector<double> bias_absorbed;
  std::vector<double> rule_absorbed;
  // Raw (pre-sigmoid / pre-softmax) target score used as the seed.
  double score = 0.0;
};

struct Attribution {
  Tensor map;
  RelevanceTrace trace;
};

// Number of trailing Sigmoid/Softmax layers; the seed is taken below them.
std::size_t TrailingSquashCount(const nn::Network& network);

// Raw target score from a forward trace (below any trailing squashing).
double TargetScore(const nn::Network& network, const nn::ActivationTrace& trace,
                   const Tensor& input, std::size_t target_index);

Attribution Attribute(const nn::Network& network, const nn::ActivationTrace& trace,
                      std::size_t target_index, const RuleMap& rules);

// Forward + Attribute.
Attribution Attribute(const nn::Network& network, const Tensor& input,
                      std::size_t target_index, const RuleMap& rules);

// First ceil(7C/13) convolutions get AlphaBeta(1,0), remaining convolutions
// get Epsilon, linear layers get Zero and parameter-free layers Passthrough.
RuleMap DefaultRuleMap(const nn::Network& network, double epsilon = 1e-6);

RuleMap UniformRuleMap(const nn::Network& network, const Rule& parametric);

struct ConservationRow {
  std::size_t layer_index = 0;
  double sum_relevance = 0.0;
  double bias_absorbed = 0.0;     // by this layer
  double rule_absorbed = 0.0;     // by this layer
  double deficit = 0.0;           // score - (sum + bias absorbed at or above)
  double unaccounted = 0.0;       // deficit minus rule absorbed at or above
};

std::vector<ConservationRow> ConservationReport(const RelevanceTrace& trace,
                                                double output_score);

}  // namespace cbmx::lrp

#endif  // CBMX_LRP_HPP_
