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

#ifndef CBMX_NETWORK_HPP_
#define CBMX_NETWORK_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cbmx/tensor.hpp"

namespace cbmx::nn {

struct Window {
  std::size_t h = 1;
  std::size_t w = 1;
  friend bool operator==(const Window&, const Window&) = default;
};

// weights: [out_ch, in_ch, kh, kw], bias: [out_ch]. Zero padding.
struct Conv2D {
  Tensor weights;
  Tensor bias;
  Window stride{1, 1};
  Window padding{0, 0};

  std::size_t out_channels() const { return weights.dim(0); }
  std::size_t in_channels() const { return weights.dim(1); }
  Window kernel() const { return {weights.dim(2), weights.dim(3)}; }
  friend bool operator==(const Conv2D&, const Conv2D&) = default;
};

// weights: [out, in], bias: [out].
struct Linear {
  Tensor weights;
  Tensor bias;

  std::size_t out_features() const { return weights.dim(0); }
  std::size_t in_features() const { return weights.dim(1); }
  friend bool operator==(const Linear&, const Linear&) = default;
};

struct ReLU {
  friend bool operator==(const ReLU&, const ReLU&) = default;
};
struct Sigmoid {
  friend bool operator==(const Sigmoid&, const Sigmoid&) = default;
};
struct Softmax {
  friend bool operator==(const Softmax&, const Softmax&) = default;
};
struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};

// No padding; the window must tile the input exactly.
struct MaxPool2D {
  Window kernel{2, 2};
  Window stride{2, 2};
  friend bool operator==(const MaxPool2D&, const MaxPool2D&) = default;
};

// Inference-mode batch norm over the channel axis of a [C,H,W] input.
struct BatchNorm2D {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  double eps = 1e-5;

  std::size_t channels() const { return gamma.size(); }
  friend bool operator==(const BatchNorm2D&, const BatchNorm2D&) = default;
};

using Layer =
    std::variant<Conv2D, Linear, ReLU, Sigmoid, Softmax, MaxPool2D, BatchNorm2D, Flatten>;

const char* LayerKindName(const Layer& layer);
bool HasParameters(const Layer& layer);

struct Network {
  std::vector<Layer> layers;
  Shape input_shape;
  friend bool operator==(const Network&, const Network&) = default;
};

struct LayerRecord {
  Tensor input;
  Tensor output;
  // Flat input index of the winning element for every pooled output
  // (max-pool layers only).
  std::vector<std::size_t> switches;
};

using ActivationTrace = std::vector<LayerRecord>;

struct ForwardResult {
  Tensor output;
  ActivationTrace trace;
};

// Validates every layer's parameters and returns the per-layer output shapes.
std::vector<Shape> InferShapes(const Network& network, const Shape& input_shape);

Shape LayerOutputShape(const Layer& layer, const Shape& input, std::size_t layer_index);

ForwardResult Forward(const Network& network, const Tensor& input);

// Output only, without retaining the trace.
Tensor Predict(const Network& network, const Tensor& input);

Tensor ApplyLayer(const Layer& layer, const Tensor& input,
                  std::vector<std::size_t>* switches);

struct PoolResult {
  Tensor output;
  std::vector<std::size_t> switches;
};

PoolResult ApplyMaxPool(const MaxPool2D& layer, const Tensor& input);

// Rewrites every Conv2D+BatchNorm2D pair into a single Conv2D.
Network FoldBatchNorm(const Network& network);

bool IsCanonized(const Network& network);

// Number of Conv2D and Linear layers.
std::size_t CountConv(const Network& network);
std::size_t CountLinear(const Network& network);

// Low-level kernels shared by forward, autodiff and LRP.
namespace ops {

Shape ConvOutputShape(const Shape& input, std::size_t out_channels, Window kernel,
                      Window stride, Window padding);

// bias may be empty for a bias-free convolution.
Tensor Conv2DForward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                     Window stride, Window padding);

// Gradient of the convolution with respect to its input: the transposed
// convolution of grad_output with weights.
Tensor Conv2DBackwardInput(const Tensor& grad_output, const Tensor& weights,
                           const Shape& input_shape, Window stride, Window padding);

// Accumulates dL/dW into grad_weights.
void Conv2DBackwardWeights(const Tensor& input, const Tensor& grad_output,
                           Window stride, Window padding, Tensor& grad_weights);

Tensor LinearForward(const Tensor& input, const Tensor& weights, const Tensor& bias);
Tensor LinearBackwardInput(const Tensor& grad_output, const Tensor& weights);

double Sigmoid(double x);
Tensor SoftmaxOf(std::span<const double> logits);

}  // namespace ops

}  // namespace cbmx::nn

#endif  // CBMX_NETWORK_HPP_
