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

#include "cbmx/attribution.hpp"

#include <algorithm>
#include <cmath>

#include "cbmx/autodiff.hpp"
#include "cbmx/error.hpp"
#include "cbmx/rng.hpp"

namespace cbmx::attribution {
namespace {

std::uint8_t Shade(double magnitude) {
  return static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - std::clamp(magnitude, 0.0, 1.0))));
}

void PutSigned(RgbImage& image, std::size_t h, std::size_t w, double v) {
  std::uint8_t* px = &image.pixels[(h * image.width + w) * 3];
  if (v > 0.0) {
    px[0] = 255;
    px[1] = px[2] = Shade(v);
  } else if (v < 0.0) {
    px[0] = px[1] = Shade(-v);
    px[2] = 255;
  } else {
    px[0] = px[1] = px[2] = 255;
  }
}

}  // namespace

std::string MethodLabel(const Method& method) {
  if (std::holds_alternative<LrpMethod>(method)) return "lrp";
  if (std::holds_alternative<GradientMethod>(method)) return "grad";
  return "ig";
}

void ValidateConfig(const AttributionConfig& config, const Shape& input_shape) {
  if (const auto* ig = std::get_if<IntegratedGradientsMethod>(&config.method)) {
    if (ig->steps < 1) throw Error(ErrorCode::kInvalidArgument, "IG steps must be >= 1");
    if (!ig->baseline.empty() && ig->baseline.shape() != input_shape) {
      throw Error(ErrorCode::kShapeMismatch, "IG baseline shape " +
                                                 ShapeToString(ig->baseline.shape()) +
                                                 " differs from input " +
                                                 ShapeToString(input_shape));
    }
  }
  if (const auto* lrp_method = std::get_if<LrpMethod>(&config.method)) {
    for (const lrp::Rule& rule : lrp_method->rules) lrp::ValidateRule(rule);
  }
  if (config.smoothgrad) {
    if (config.smoothgrad->n_samples < 1) {
      throw Error(ErrorCode::kInvalidArgument, "SmoothGrad needs n_samples >= 1");
    }
    if (!(config.smoothgrad->sigma >= 0.0) || !std::isfinite(config.smoothgrad->sigma)) {
      throw Error(ErrorCode::kInvalidArgument, "SmoothGrad sigma must be finite and >= 0");
    }
  }
}

nn::Network ScoreNetwork(const nn::Network& network) {
  nn::Network scored = network;
  scored.layers.resize(network.layers.size() - lrp::TrailingSquashCount(network));
  return scored;
}

AttributionMap GradientSaliency(const nn::Network& network, const Tensor& input,
                                std::size_t target_index) {
  const nn::Network scored = ScoreNetwork(network);
  return {autodiff::InputGradient(scored, input, autodiff::SelectOutput{target_index}),
          target_index, "grad"};
}

AttributionMap IntegratedGradients(const nn::Network& network, const Tensor& input,
                                   std::size_t target_index, std::size_t steps,
                                   const Tensor& baseline_in) {
  if (steps < 1) throw Error(ErrorCode::kInvalidArgument, "IG steps must be >= 1");
  const Tensor baseline = baseline_in.empty() ? Tensor(input.shape()) : baseline_in;
  if (baseline.shape() != input.shape()) {
    throw Error(ErrorCode::kShapeMismatch, "IG baseline shape differs from input");
  }
  const nn::Network scored = ScoreNetwork(network);
  const autodiff::LossSpec loss = autodiff::SelectOutput{target_index};
  Tensor total(input.shape());
  Tensor point(input.shape());
  const double m = static_cast<double>(steps);
  for (std::size_t t = 1; t <= steps; ++t) {
    const double alpha = (static_cast<double>(t) - 0.5) / m;
    for (std::size_t i = 0; i < input.size(); ++i) {
      point[i] = baseline[i] + alpha * (input[i] - baseline[i]);
    }
    const Tensor g = autodiff::InputGradient(scored, point, loss);
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += g[i];
  }
  for (std::size_t i = 0; i < total.size(); ++i) {
    total[i] = (input[i] - baseline[i]) * (total[i] / m);
  }
  return {std::move(total), target_index, "ig"};
}

AttributionMap LrpAttribution(const nn::Network& network, const Tensor& input,
                              std::size_t target_index, const lrp::RuleMap& rules) {
  const nn::Network canonical =
      nn::IsCanonized(network) ? network : nn::FoldBatchNorm(network);
  const lrp::RuleMap& used = rules.empty() ? lrp::DefaultRuleMap(canonical) : rules;
  lrp::Attribution a = lrp::Attribute(canonical, input, target_index, used);
  return {std::move(a.map), target_index, "lrp"};
}

AttributionMap ComputeMethod(const Method& method, const nn::Network& network,
                             const Tensor& input, std::size_t target_index) {
  if (const auto* l = std::get_if<LrpMethod>(&method)) {
    return LrpAttribution(network, input, target_index, l->rules);
  }
  if (std::holds_alternative<GradientMethod>(method)) {
    return GradientSaliency(network, input, target_index);
  }
  const auto& ig = std::get<IntegratedGradientsMethod>(method);
  return IntegratedGradients(network, input, target_index, ig.steps, ig.baseline);
}

AttributionMap SmoothGrad(const Method& base, const nn::Network& network, const Tensor& input,
                          std::size_t target_index, std::size_t n_samples, double sigma,
                          std::uint64_t seed) {
  if (n_samples < 1) throw Error(ErrorCode::kInvalidArgument, "SmoothGrad needs n_samples >= 1");
  if (!(sigma >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "SmoothGrad sigma must be >= 0");
  AttributionMap out{Tensor(), target_index, MethodLabel(base) + "+smoothgrad"};
  if (sigma == 0.0) {
    // Every draw is the unperturbed input.
    out.values = ComputeMethod(base, network, input, target_index).values;
    return out;
  }
  Rng rng(seed);
  Tensor total(input.shape());
  Tensor noisy(input.shape());
  for (std::size_t s = 0; s < n_samples; ++s) {
    for (std::size_t i = 0; i < input.size(); ++i) noisy[i] = input[i] + sigma * rng.Gaussian();
    const Tensor map = ComputeMethod(base, network, noisy, target_index).values;
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += map[i];
  }
  const double n = static_cast<double>(n_samples);
  for (double& v : total.values()) v /= n;
  out.values = std::move(total);
  return out;
}

AttributionMap Compute(const AttributionConfig& config, const nn::Network& network,
                       const Tensor& input, std::size_t target_index) {
  ValidateConfig(config, input.shape());
  if (config.smoothgrad) {
    return SmoothGrad(config.method, network, input, target_index, config.smoothgrad->n_samples,
                      config.smoothgrad->sigma, config.smoothgrad->seed);
  }
  return ComputeMethod(config.method, network, input, target_index);
}

Tensor ChannelReduce(const Tensor& map) {
  if (map.rank() == 2) {
    Tensor out = map;
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
    return out;
  }
  if (map.rank() != 3) {
    throw Error(ErrorCode::kShapeMismatch,
                "channel reduction needs [C,H,W] or [H,W], got " + ShapeToString(map.shape()));
  }
  const std::size_t channels = map.dim(0), height = map.dim(1), width = map.dim(2);
  Tensor out({height, width});
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t p = 0; p < height * width; ++p) {
      const double v = map[c * height * width + p];
      if (v > 0.0) out[p] += v;
    }
  }
  return out;
}

RgbImage RenderSignedMap(const Tensor& map, Normalization normalization,
                         std::size_t segment_width, std::size_t strip_height) {
  if (!map.AllFinite()) throw Error(ErrorCode::kNonFiniteValue, "cannot render a non-finite map");
  Tensor grid;
  if (map.rank() == 3) {
    grid = Tensor({map.dim(1), map.dim(2)});
    const std::size_t plane = map.dim(1) * map.dim(2);
    for (std::size_t c = 0; c < map.dim(0); ++c) {
      for (std::size_t p = 0; p < plane; ++p) grid[p] += map[c * plane + p];
    }
  } else if (map.rank() == 2) {
    grid = map;
  } else if (map.rank() == 1) {
    grid = map.Reshaped({1, map.size()});
  } else {
    throw Error(ErrorCode::kShapeMismatch, "cannot render map of shape " +
                                               ShapeToString(map.shape()));
  }
  double scale = 1.0;
  if (normalization == Normalization::kMaxAbs) {
    const double m = grid.MaxAbs();
    scale = m > 0.0 ? 1.0 / m : 0.0;
  }
  const bool strip = map.rank() == 1;
  const std::size_t cell_w = strip ? std::max<std::size_t>(segment_width, 1) : 1;
  const std::size_t cell_h = strip ? std::max<std::size_t>(strip_height, 1) : 1;
  RgbImage image{grid.dim(0) * cell_h, grid.dim(1) * cell_w, {}};
  image.pixels.assign(image.height * image.width * 3, 255);
  for (std::size_t h = 0; h < image.height; ++h) {
    for (std::size_t w = 0; w < image.width; ++w) {
      PutSigned(image, h, w, grid[(h / cell_h) * grid.dim(1) + w / cell_w] * scale);
    }
  }
  return image;
}

GrayImage RenderMagnitude(const Tensor& map) {
  const Tensor grid = map.rank() == 1 ? map.Reshaped({1, map.size()}) : ChannelReduce(map);
  GrayImage image{grid.dim(0), grid.dim(1), std::vector<std::uint8_t>(grid.size(), 0)};
  const double m = grid.MaxAbs();
  if (m == 0.0) return image;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    image.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::abs(grid[i]) / m));
  }
  return image;
}

}  // namespace cbmx::attribution
