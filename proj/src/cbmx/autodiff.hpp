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

#ifndef CBMX_AUTODIFF_HPP_
#define CBMX_AUTODIFF_HPP_

#include <cstddef>
#include <functional>
#include <variant>
#include <vector>

#include "cbmx/network.hpp"
#include "cbmx/tensor.hpp"

namespace cbmx::autodiff {

// Scalar losses over the raw network output (treated as logits where a
// probability is needed).
struct SelectOutput {
  std::size_t index = 0;
};
struct BinaryCrossEntropyPerOutput {
  std::vector<double> targets;
};
struct SoftmaxCrossEntropy {
  std::size_t target_class = 0;
};
using LossSpec = std::variant<SelectOutput, BinaryCrossEntropyPerOutput, SoftmaxCrossEntropy>;

double EvaluateLoss(const Tensor& output, const LossSpec& loss);
Tensor LossGradient(const Tensor& output, const LossSpec& loss);

// Gradients for one layer's parameters. Conv/Linear fill weights+bias,
// BatchNorm2D fills gamma (weights) and beta (bias); other layers stay empty.
struct LayerGradients {
  Tensor weights;
  Tensor bias;
};

struct GradientBundle {
  Tensor input_grad;
  std::vector<LayerGradients> param_grads;
};

// Reverse accumulation of grad_output through a recorded forward pass.
// Parameter gradients are only computed when with_params is set; input_grad
// is left empty when with_input_grad is not.
GradientBundle Backward(const nn::Network& network, const nn::ActivationTrace& trace,
                        const Tensor& grad_output, bool with_params,
                        bool with_input_grad = true);

Tensor InputGradient(const nn::Network& network, const Tensor& input, const LossSpec& loss);

GradientBundle ParamGradients(const nn::Network& network, const Tensor& input,
                              const LossSpec& loss);

// Central differences (L(x+h e_i) - L(x-h e_i)) / 2h per input coordinate.
Tensor FiniteDifferenceGradient(const std::function<double(const Tensor&)>& fn,
                                const Tensor& input, double h = 1e-4);
Tensor FiniteDifferenceGradient(const nn::Network& network, const Tensor& input,
                                const LossSpec& loss, double h = 1e-4);

}  // namespace cbmx::autodiff

#endif  // CBMX_AUTODIFF_HPP_
