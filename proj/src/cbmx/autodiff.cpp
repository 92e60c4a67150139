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

#include "cbmx/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "cbmx/error.hpp"

namespace cbmx::autodiff {
namespace {

void CheckLoss(const Tensor& output, const LossSpec& loss) {
  if (output.rank() != 1) {
    throw Error(ErrorCode::kShapeMismatch,
                "losses need a rank-1 output, got " + ShapeToString(output.shape()));
  }
  const std::size_t n = output.size();
  if (const auto* s = std::get_if<SelectOutput>(&loss); s && s->index >= n) {
    throw Error(ErrorCode::kIndexOutOfRange, "output index " + std::to_string(s->index));
  }
  if (const auto* c = std::get_if<SoftmaxCrossEntropy>(&loss); c && c->target_class >= n) {
    throw Error(ErrorCode::kIndexOutOfRange, "target class " + std::to_string(c->target_class));
  }
  if (const auto* b = std::get_if<BinaryCrossEntropyPerOutput>(&loss)) {
    if (b->targets.size() != n) {
      throw Error(ErrorCode::kLengthMismatch, "BCE targets length differs from output arity");
    }
    for (double t : b->targets) {
      if (t != 0.0 && t != 1.0) {
        throw Error(ErrorCode::kInvalidArgument, "BCE targets must be 0 or 1");
      }
    }
  }
}

double LogSumExp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace

double EvaluateLoss(const Tensor& output, const LossSpec& loss) {
  CheckLoss(output, loss);
  if (const auto* s = std::get_if<SelectOutput>(&loss)) return output[s->index];
  if (const auto* c = std::get_if<SoftmaxCrossEntropy>(&loss)) {
    return LogSumExp(output.values()) - output[c->target_class];
  }
  const auto& targets = std::get<BinaryCrossEntropyPerOutput>(loss).targets;
  double total = 0.0;
  for (std::size_t k = 0; k < output.size(); ++k) {
    const double z = output[k];
    total += std::max(z, 0.0) - z * targets[k] + std::log1p(std::exp(-std::abs(z)));
  }
  return total;
}

Tensor LossGradient(const Tensor& output, const LossSpec& loss) {
  CheckLoss(output, loss);
  Tensor grad(output.shape());
  if (const auto* s = std::get_if<SelectOutput>(&loss)) {
    grad[s->index] = 1.0;
  } else if (const auto* c = std::get_if<SoftmaxCrossEntropy>(&loss)) {
    grad = nn::ops::SoftmaxOf(output.values());
    grad[c->target_class] -= 1.0;
  } else {
    const auto& targets = std::get<BinaryCrossEntropyPerOutput>(loss).targets;
    for (std::size_t k = 0; k < output.size(); ++k) {
      grad[k] = nn::ops::Sigmoid(output[k]) - targets[k];
    }
  }
  return grad;
}

GradientBundle Backward(const nn::Network& network, const nn::ActivationTrace& trace,
                        const Tensor& grad_output, bool with_params, bool with_input_grad) {
  if (trace.size() != network.layers.size()) {
    throw Error(ErrorCode::kShapeMismatch, "trace length differs from layer count");
  }
  GradientBundle bundle;
  bundle.param_grads.resize(network.layers.size());
  Tensor grad = grad_output;
  for (std::size_t li = network.layers.size(); li-- > 0;) {
    const nn::Layer& layer = network.layers[li];
    const nn::LayerRecord& rec = trace[li];
    if (grad.shape() != rec.output.shape()) {
      throw Error(ErrorCode::kShapeMismatch,
                  "gradient at layer " + std::to_string(li) + " has shape " +
                      ShapeToString(grad.shape()) + ", expected " +
                      ShapeToString(rec.output.shape()));
    }
    LayerGradients& pg = bundle.param_grads[li];
    Tensor grad_in;
    if (const auto* conv = std::get_if<nn::Conv2D>(&layer)) {
      if (with_params) {
        pg.weights = Tensor(conv->weights.shape());
        nn::ops::Conv2DBackwardWeights(rec.input, grad, conv->stride, conv->padding,
                                       pg.weights);
        pg.bias = Tensor(conv->bias.shape());
        const std::size_t plane = grad.dim(1) * grad.dim(2);
        for (std::size_t o = 0; o < conv->out_channels(); ++o) {
          double acc = 0.0;
          for (std::size_t p = 0; p < plane; ++p) acc += grad[o * plane + p];
          pg.bias[o] = acc;
        }
      }
      if (li == 0 && !with_input_grad) break;
      grad_in = nn::ops::Conv2DBackwardInput(grad, conv->weights, rec.input.shape(),
                                             conv->stride, conv->padding);
    } else if (const auto* lin = std::get_if<nn::Linear>(&layer)) {
      if (with_params) {
        const std::size_t out_f = lin->out_features(), in_f = lin->in_features();
        pg.weights = Tensor(lin->weights.shape());
        for (std::size_t o = 0; o < out_f; ++o) {
          for (std::size_t i = 0; i < in_f; ++i) pg.weights[o * in_f + i] = grad[o] * rec.input[i];
        }
        pg.bias = grad;
      }
      grad_in = nn::ops::LinearBackwardInput(grad, lin->weights);
    } else if (std::holds_alternative<nn::ReLU>(layer)) {
      grad_in = grad;
      // Subgradient at exactly zero is zero.
      for (std::size_t i = 0; i < grad_in.size(); ++i) {
        if (!(rec.input[i] > 0.0)) grad_in[i] = 0.0;
      }
    } else if (std::holds_alternative<nn::Sigmoid>(layer)) {
      grad_in = grad;
      for (std::size_t i = 0; i < grad_in.size(); ++i) {
        const double s = rec.output[i];
        grad_in[i] *= s * (1.0 - s);
      }
    } else if (std::holds_alternative<nn::Softmax>(layer)) {
      double dot = 0.0;
      for (std::size_t i = 0; i < grad.size(); ++i) dot += grad[i] * rec.output[i];
      grad_in = Tensor(grad.shape());
      for (std::size_t i = 0; i < grad.size(); ++i) {
        grad_in[i] = rec.output[i] * (grad[i] - dot);
      }
    } else if (std::holds_alternative<nn::MaxPool2D>(layer)) {
      grad_in = Tensor(rec.input.shape());
      for (std::size_t k = 0; k < rec.switches.size(); ++k) grad_in[rec.switches[k]] += grad[k];
    } else if (const auto* bn = std::get_if<nn::BatchNorm2D>(&layer)) {
      grad_in = grad;
      const std::size_t plane = grad.dim(1) * grad.dim(2);
      if (with_params) {
        pg.weights = Tensor(bn->gamma.shape());
        pg.bias = Tensor(bn->beta.shape());
      }
      for (std::size_t c = 0; c < bn->channels(); ++c) {
        const double inv_std = 1.0 / std::sqrt(bn->running_var[c] + bn->eps);
        double d_gamma = 0.0, d_beta = 0.0;
        for (std::size_t p = 0; p < plane; ++p) {
          const std::size_t idx = c * plane + p;
          d_gamma += grad[idx] * (rec.input[idx] - bn->running_mean[c]) * inv_std;
          d_beta += grad[idx];
          grad_in[idx] = grad[idx] * bn->gamma[c] * inv_std;
        }
        if (with_params) {
          pg.weights[c] = d_gamma;
          pg.bias[c] = d_beta;
        }
      }
    } else {  // Flatten
      grad_in = grad.Reshaped(rec.input.shape());
    }
    grad = std::move(grad_in);
  }
  if (!grad.AllFinite()) {
    throw Error(ErrorCode::kNonFiniteValue, "non-finite input gradient");
  }
  if (with_input_grad) bundle.input_grad = std::move(grad);
  return bundle;
}

Tensor InputGradient(const nn::Network& network, const Tensor& input, const LossSpec& loss) {
  nn::ForwardResult fw = nn::Forward(network, input);
  return Backward(network, fw.trace, LossGradient(fw.output, loss), false).input_grad;
}

GradientBundle ParamGradients(const nn::Network& network, const Tensor& input,
                              const LossSpec& loss) {
  nn::ForwardResult fw = nn::Forward(network, input);
  return Backward(network, fw.trace, LossGradient(fw.output, loss), true);
}

Tensor FiniteDifferenceGradient(const std::function<double(const Tensor&)>& fn,
                                const Tensor& input, double h) {
  if (!(h > 0.0)) throw Error(ErrorCode::kInvalidArgument, "finite-difference step must be > 0");
  Tensor grad(input.shape());
  Tensor probe = input;
  for (std::size_t i = 0; i < input.size(); ++i) {
    probe[i] = input[i] + h;
    const double up = fn(probe);
    probe[i] = input[i] - h;
    const double down = fn(probe);
    probe[i] = input[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

Tensor FiniteDifferenceGradient(const nn::Network& network, const Tensor& input,
                                const LossSpec& loss, double h) {
  return FiniteDifferenceGradient(
      [&](const Tensor& x) { return EvaluateLoss(nn::Predict(network, x), loss); }, input, h);
}

}  // namespace cbmx::autodiff
