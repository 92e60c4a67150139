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

#include "cbmx/lrp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "cbmx/error.hpp"

namespace cbmx::lrp {
namespace {

using Affine = std::function<Tensor(const Tensor& x, const Tensor& w)>;
using AffineT = std::function<Tensor(const Tensor& s, const Tensor& w)>;

Tensor PositivePart(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor NegativePart(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.values()) v = v < 0.0 ? v : 0.0;
  return out;
}

bool AnyNegative(const Tensor& t) {
  return std::any_of(t.values().begin(), t.values().end(), [](double v) { return v < 0.0; });
}

void AddInPlace(Tensor& acc, const Tensor& x) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += x[i];
}

// bias_full is the bias broadcast to the output shape.
RuleResult ApplyAffineRule(const Tensor& a, const Tensor& w, const Tensor& bias_full,
                           const Tensor& r_out, const Rule& rule, const Affine& forward,
                           const AffineT& backward) {
  RuleResult result;
  if (std::holds_alternative<Zero>(rule) || std::holds_alternative<Epsilon>(rule)) {
    const auto* eps_rule = std::get_if<Epsilon>(&rule);
    Tensor z = forward(a, w);
    Tensor s(z.shape());
    for (std::size_t k = 0; k < z.size(); ++k) {
      const double zk = z[k] + bias_full[k];
      double denom = zk;
      if (eps_rule) denom += eps_rule->epsilon * (zk >= 0.0 ? 1.0 : -1.0);
      if (denom == 0.0) {
        result.rule_absorbed += r_out[k];
        continue;
      }
      s[k] = r_out[k] / denom;
      result.bias_absorbed += bias_full[k] * s[k];
      if (eps_rule) result.rule_absorbed += (denom - zk) * s[k];
    }
    Tensor c = backward(s, w);
    for (std::size_t j = 0; j < c.size(); ++j) c[j] *= a[j];
    result.relevance_in = std::move(c);
    return result;
  }

  const auto& ab = std::get<AlphaBeta>(rule);
  const Tensor a_pos = PositivePart(a);
  const Tensor w_pos = PositivePart(w);
  const Tensor w_neg = NegativePart(w);
  const bool has_neg_input = AnyNegative(a);
  const Tensor a_neg = has_neg_input ? NegativePart(a) : Tensor();
  const bool use_beta = ab.beta != 0.0;

  // z+ collects (a w)+ = a+ w+ + a- w-, z- collects (a w)- = a+ w- + a- w+.
  Tensor z_pos = forward(a_pos, w_pos);
  if (has_neg_input) AddInPlace(z_pos, forward(a_neg, w_neg));
  Tensor z_neg;
  if (use_beta) {
    z_neg = forward(a_pos, w_neg);
    if (has_neg_input) AddInPlace(z_neg, forward(a_neg, w_pos));
  }

  Tensor s_pos(z_pos.shape());
  Tensor s_neg(z_pos.shape());
  for (std::size_t k = 0; k < z_pos.size(); ++k) {
    const double b = bias_full[k];
    const double zp = z_pos[k] + (b > 0.0 ? b : 0.0);
    if (zp != 0.0) {
      s_pos[k] = ab.alpha * r_out[k] / zp;
      result.bias_absorbed += (b > 0.0 ? b : 0.0) * s_pos[k];
    } else {
      result.rule_absorbed += ab.alpha * r_out[k];
    }
    if (use_beta) {
      const double zn = z_neg[k] + (b < 0.0 ? b : 0.0);
      if (zn != 0.0) {
        s_neg[k] = ab.beta * r_out[k] / zn;
        result.bias_absorbed -= (b < 0.0 ? b : 0.0) * s_neg[k];
      } else {
        result.rule_absorbed -= ab.beta * r_out[k];
      }
    }
  }

  Tensor r_in = backward(s_pos, w_pos);
  for (std::size_t j = 0; j < r_in.size(); ++j) r_in[j] *= a_pos[j];
  if (has_neg_input) {
    const Tensor c = backward(s_pos, w_neg);
    for (std::size_t j = 0; j < r_in.size(); ++j) r_in[j] += a_neg[j] * c[j];
  }
  if (use_beta) {
    const Tensor c1 = backward(s_neg, w_neg);
    for (std::size_t j = 0; j < r_in.size(); ++j) r_in[j] -= a_pos[j] * c1[j];
    if (has_neg_input) {
      const Tensor c2 = backward(s_neg, w_pos);
      for (std::size_t j = 0; j < r_in.size(); ++j) r_in[j] -= a_neg[j] * c2[j];
    }
  }
  result.relevance_in = std::move(r_in);
  return result;
}

void CheckParametricRule(const Rule& rule, std::size_t layer_index) {
  if (std::holds_alternative<Passthrough>(rule)) {
    throw Error(ErrorCode::kInvalidArgument,
                "layer " + std::to_string(layer_index) +
                    ": Passthrough is only valid on parameter-free layers");
  }
  ValidateRule(rule);
}

}  // namespace

const char* RuleName(const Rule& rule) {
  if (std::holds_alternative<Zero>(rule)) return "zero";
  if (std::holds_alternative<Epsilon>(rule)) return "epsilon";
  if (std::holds_alternative<AlphaBeta>(rule)) return "alphabeta";
  return "passthrough";
}

void ValidateRule(const Rule& rule) {
  if (const auto* e = std::get_if<Epsilon>(&rule); e && !(e->epsilon > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "epsilon must be > 0");
  }
  if (const auto* ab = std::get_if<AlphaBeta>(&rule)) {
    if (!(ab->beta >= 0.0) || std::abs(ab->alpha - ab->beta - 1.0) > 1e-12) {
      throw Error(ErrorCode::kInvalidArgument, "alpha-beta rule needs alpha - beta = 1, beta >= 0");
    }
  }
}

RuleResult LinearRule(const Tensor& activations, const Tensor& weights, const Tensor& bias,
                      const Tensor& relevance_out, const Rule& rule) {
  if (weights.rank() != 2 || activations.shape() != Shape{weights.dim(1)} ||
      relevance_out.shape() != Shape{weights.dim(0)} ||
      (!bias.empty() && bias.shape() != Shape{weights.dim(0)})) {
    throw Error(ErrorCode::kShapeMismatch,
                "linear rule: activations " + ShapeToString(activations.shape()) +
                    ", weights " + ShapeToString(weights.shape()) + ", relevance " +
                    ShapeToString(relevance_out.shape()));
  }
  CheckParametricRule(rule, 0);
  const Tensor bias_full = bias.empty() ? Tensor({weights.dim(0)}) : bias;
  const Tensor no_bias;
  return ApplyAffineRule(
      activations, weights, bias_full, relevance_out, rule,
      [&](const Tensor& x, const Tensor& w) { return nn::ops::LinearForward(x, w, no_bias); },
      [](const Tensor& s, const Tensor& w) { return nn::ops::LinearBackwardInput(s, w); });
}

RuleResult ConvRule(const nn::Conv2D& layer, const Tensor& activations,
                    const Tensor& relevance_out, const Rule& rule) {
  const Shape out_shape = nn::LayerOutputShape(nn::Layer{layer}, activations.shape(), 0);
  if (relevance_out.shape() != out_shape) {
    throw Error(ErrorCode::kShapeMismatch, "conv rule: relevance " +
                                               ShapeToString(relevance_out.shape()) +
                                               ", expected " + ShapeToString(out_shape));
  }
  CheckParametricRule(rule, 0);
  Tensor bias_full(out_shape);
  const std::size_t plane = out_shape[1] * out_shape[2];
  for (std::size_t o = 0; o < out_shape[0]; ++o) {
    std::fill_n(bias_full.values().begin() + o * plane, plane, layer.bias[o]);
  }
  const Tensor no_bias;
  const Shape in_shape = activations.shape();
  return ApplyAffineRule(
      activations, layer.weights, bias_full, relevance_out, rule,
      [&](const Tensor& x, const Tensor& w) {
        return nn::ops::Conv2DForward(x, w, no_bias, layer.stride, layer.padding);
      },
      [&](const Tensor& s, const Tensor& w) {
        return nn::ops::Conv2DBackwardInput(s, w, in_shape, layer.stride, layer.padding);
      });
}

Tensor MaxPoolRule(const std::vector<std::size_t>& switches, const Tensor& relevance_out,
                   const Shape& input_shape) {
  if (switches.size() != relevance_out.size()) {
    throw Error(ErrorCode::kShapeMismatch, "max-pool rule: switch count differs from relevance");
  }
  Tensor r_in(input_shape);
  for (std::size_t k = 0; k < switches.size(); ++k) {
    if (switches[k] >= r_in.size()) {
      throw Error(ErrorCode::kShapeMismatch, "max-pool rule: switch index out of range");
    }
    r_in[switches[k]] += relevance_out[k];
  }
  return r_in;
}

std::size_t TrailingSquashCount(const nn::Network& network) {
  std::size_t n = 0;
  for (auto it = network.layers.rbegin(); it != network.layers.rend(); ++it) {
    if (!std::holds_alternative<nn::Sigmoid>(*it) && !std::holds_alternative<nn::Softmax>(*it)) {
      break;
    }
    ++n;
  }
  return n;
}

double TargetScore(const nn::Network& network, const nn::ActivationTrace& trace,
                   const Tensor& input, std::size_t target_index) {
  const std::size_t seed_layer = network.layers.size() - TrailingSquashCount(network);
  const Tensor& scores = seed_layer == 0 ? input : trace[seed_layer - 1].output;
  if (target_index >= scores.size()) {
    throw Error(ErrorCode::kIndexOutOfRange, "target index " + std::to_string(target_index) +
                                                 " >= " + std::to_string(scores.size()));
  }
  return scores[target_index];
}

Attribution Attribute(const nn::Network& network, const nn::ActivationTrace& trace,
                      std::size_t target_index, const RuleMap& rules) {
  const std::size_t num_layers = network.layers.size();
  if (!nn::IsCanonized(network)) {
    throw Error(ErrorCode::kNotCanonized, "fold batch norm before relevance propagation");
  }
  if (rules.size() != num_layers) {
    throw Error(ErrorCode::kInvalidArgument, "rule map covers " + std::to_string(rules.size()) +
                                                 " of " + std::to_string(num_layers) + " layers");
  }
  if (trace.size() != num_layers || num_layers == 0) {
    throw Error(ErrorCode::kShapeMismatch, "activation trace does not match the network");
  }
  for (std::size_t i = 0; i < num_layers; ++i) {
    if (nn::HasParameters(network.layers[i])) {
      CheckParametricRule(rules[i], i);
    } else if (!std::holds_alternative<Passthrough>(rules[i])) {
      throw Error(ErrorCode::kInvalidArgument,
                  "layer " + std::to_string(i) + " is parameter-free and needs Passthrough");
    }
  }

  const std::size_t seed_layer = num_layers - TrailingSquashCount(network);
  const Tensor& scores = seed_layer == 0 ? trace[0].input : trace[seed_layer - 1].output;
  if (target_index >= scores.size()) {
    throw Error(ErrorCode::kIndexOutOfRange, "target index " + std::to_string(target_index) +
                                                 " >= " + std::to_string(scores.size()));
  }

  Attribution out;
  RelevanceTrace& rt = out.trace;
  rt.relevance.resize(num_layers + 1);
  rt.bias_absorbed.assign(num_layers, 0.0);
  rt.rule_absorbed.assign(num_layers, 0.0);
  rt.score = scores[target_index];

  Tensor seed(scores.shape());
  seed[target_index] = rt.score;
  for (std::size_t l = seed_layer; l <= num_layers; ++l) rt.relevance[l] = seed;

  Tensor r = std::move(seed);
  for (std::size_t li = seed_layer; li-- > 0;) {
    const nn::Layer& layer = network.layers[li];
    const nn::LayerRecord& rec = trace[li];
    if (r.shape() != rec.output.shape()) {
      throw Error(ErrorCode::kShapeMismatch, "relevance shape mismatch at layer " +
                                                 std::to_string(li));
    }
    if (const auto* conv = std::get_if<nn::Conv2D>(&layer)) {
      RuleResult res = ConvRule(*conv, rec.input, r, rules[li]);
      rt.bias_absorbed[li] = res.bias_absorbed;
      rt.rule_absorbed[li] = res.rule_absorbed;
      r = std::move(res.relevance_in);
    } else if (const auto* lin = std::get_if<nn::Linear>(&layer)) {
      RuleResult res = LinearRule(rec.input, lin->weights, lin->bias, r, rules[li]);
      rt.bias_absorbed[li] = res.bias_absorbed;
      rt.rule_absorbed[li] = res.rule_absorbed;
      r = std::move(res.relevance_in);
    } else if (std::holds_alternative<nn::MaxPool2D>(layer)) {
      r = MaxPoolRule(rec.switches, r, rec.input.shape());
    } else if (std::holds_alternative<nn::Flatten>(layer)) {
      r = r.Reshaped(rec.input.shape());
    }
    // ReLU, Sigmoid, Softmax: identity.
    rt.relevance[li] = r;
  }
  out.map = std::move(r);
  return out;
}

Attribution Attribute(const nn::Network& network, const Tensor& input,
                      std::size_t target_index, const RuleMap& rules) {
  const nn::ForwardResult fw = nn::Forward(network, input);
  return Attribute(network, fw.trace, target_index, rules);
}

RuleMap DefaultRuleMap(const nn::Network& network, double epsilon) {
  const std::size_t convs = nn::CountConv(network);
  const std::size_t alpha_beta_convs = (7 * convs + 12) / 13;
  RuleMap rules;
  rules.reserve(network.layers.size());
  std::size_t conv_seen = 0;
  for (const nn::Layer& layer : network.layers) {
    if (std::holds_alternative<nn::Conv2D>(layer)) {
      if (conv_seen++ < alpha_beta_convs) {
        rules.emplace_back(AlphaBeta{1.0, 0.0});
      } else {
        rules.emplace_back(Epsilon{epsilon});
      }
    } else if (std::holds_alternative<nn::Linear>(layer)) {
      rules.emplace_back(Zero{});
    } else {
      rules.emplace_back(Passthrough{});
    }
  }
  return rules;
}

RuleMap UniformRuleMap(const nn::Network& network, const Rule& parametric) {
  RuleMap rules;
  for (const nn::Layer& layer : network.layers) {
    if (nn::HasParameters(layer)) {
      rules.push_back(parametric);
    } else {
      rules.emplace_back(Passthrough{});
    }
  }
  return rules;
}

std::vector<ConservationRow> ConservationReport(const RelevanceTrace& trace,
                                                double output_score) {
  const std::size_t num_layers = trace.bias_absorbed.size();
  std::vector<ConservationRow> rows(num_layers + 1);
  double bias_above = 0.0, rule_above = 0.0;
  for (std::size_t l = num_layers + 1; l-- > 0;) {
    ConservationRow& row = rows[l];
    row.layer_index = l;
    if (l < num_layers) {
      row.bias_absorbed = trace.bias_absorbed[l];
      row.rule_absorbed = trace.rule_absorbed[l];
      bias_above += row.bias_absorbed;
      rule_above += row.rule_absorbed;
    }
    row.sum_relevance = trace.relevance[l].Sum();
    row.deficit = output_score - (row.sum_relevance + bias_above);
    row.unaccounted = row.deficit - rule_above;
  }
  return rows;
}

}  // namespace cbmx::lrp
