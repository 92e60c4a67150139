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

// Random fixtures shared by the unit and acceptance tests.

#ifndef CBMX_TESTS_SUPPORT_HPP_
#define CBMX_TESTS_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "cbmx/network.hpp"
#include "cbmx/rng.hpp"
#include "cbmx/tensor.hpp"

namespace cbmx::testing {

inline Tensor RandomTensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.Uniform(lo, hi);
  return t;
}

inline nn::Conv2D RandomConv(Rng& rng, std::size_t in, std::size_t out, std::size_t k,
                             std::size_t pad, bool with_bias) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(in * k * k));
  nn::Conv2D c{RandomTensor(rng, {out, in, k, k}, -2 * scale, 2 * scale), Tensor({out}),
               {1, 1}, {pad, pad}};
  if (with_bias) c.bias = RandomTensor(rng, {out}, -0.2, 0.2);
  return c;
}

inline nn::Linear RandomLinear(Rng& rng, std::size_t in, std::size_t out, bool with_bias) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(in));
  nn::Linear l{RandomTensor(rng, {out, in}, -2 * scale, 2 * scale), Tensor({out})};
  if (with_bias) l.bias = RandomTensor(rng, {out}, -0.2, 0.2);
  return l;
}

// conv-ReLU-[maxpool]-conv-ReLU-flatten-linear on a small image.
inline nn::Network RandomConvNet(Rng& rng, bool with_bias, bool with_pool) {
  nn::Network net;
  const std::size_t c0 = 1 + rng.Index(2), c1 = 2 + rng.Index(2), c2 = 2 + rng.Index(2);
  const std::size_t side = with_pool ? 6 : 5;
  net.input_shape = {c0, side, side};
  net.layers.emplace_back(RandomConv(rng, c0, c1, 3, 1, with_bias));
  net.layers.emplace_back(nn::ReLU{});
  std::size_t s = side;
  if (with_pool) {
    net.layers.emplace_back(nn::MaxPool2D{{2, 2}, {2, 2}});
    s /= 2;
  }
  net.layers.emplace_back(RandomConv(rng, c1, c2, 3, 1, with_bias));
  net.layers.emplace_back(nn::ReLU{});
  net.layers.emplace_back(nn::Flatten{});
  net.layers.emplace_back(RandomLinear(rng, c2 * s * s, 3, with_bias));
  return net;
}

// Dense Linear-ReLU-Linear.
inline nn::Network RandomMlp(Rng& rng, std::size_t in, std::size_t hidden, std::size_t out,
                             bool with_bias) {
  nn::Network net;
  net.input_shape = {in};
  net.layers.emplace_back(RandomLinear(rng, in, hidden, with_bias));
  net.layers.emplace_back(nn::ReLU{});
  net.layers.emplace_back(RandomLinear(rng, hidden, out, with_bias));
  return net;
}

// Smallest |pre-activation| feeding any ReLU.
inline double MinReluMargin(const nn::Network& net, const Tensor& input) {
  const nn::ForwardResult fw = nn::Forward(net, input);
  double margin = INFINITY;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (!std::holds_alternative<nn::ReLU>(net.layers[i])) continue;
    for (double v : fw.trace[i].input.values()) margin = std::min(margin, std::abs(v));
  }
  return margin;
}

inline double RelativeError(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

// Max over entries of |a-b| / max(|a|,|b|, floor).
inline double MaxRelativeError(const Tensor& a, const Tensor& b, double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace cbmx::testing

#endif  // CBMX_TESTS_SUPPORT_HPP_
