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

#include "cbmx/network.hpp"

#include <algorithm>
#include <cmath>

#include "cbmx/error.hpp"

namespace cbmx::nn {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

[[noreturn]] void ThrowMismatch(std::size_t layer_index, const std::string& expected,
                                const Shape& got) {
  throw Error(ErrorCode::kShapeMismatch,
              "layer " + std::to_string(layer_index) + ": expected " + expected +
                  ", got " + ShapeToString(got));
}

void RequireRank(std::size_t layer_index, const Shape& got, std::size_t rank,
                 const char* what) {
  if (got.size() != rank) ThrowMismatch(layer_index, what, got);
}

// Range of output positions o for which o*stride + offset - pad lies in
// [0, extent).
std::pair<std::size_t, std::size_t> ValidRange(std::size_t out_extent, std::size_t in_extent,
                                               std::size_t stride, std::size_t offset,
                                               std::size_t pad) {
  // o*stride + offset >= pad
  std::size_t lo = 0;
  if (offset < pad) lo = (pad - offset + stride - 1) / stride;
  // o*stride + offset - pad <= in_extent - 1
  std::size_t hi = 0;
  if (in_extent + pad > offset) hi = (in_extent + pad - offset - 1) / stride + 1;
  hi = std::min(hi, out_extent);
  if (lo > hi) lo = hi;
  return {lo, hi};
}

}  // namespace

const char* LayerKindName(const Layer& layer) {
  return std::visit(Overloaded{
                        [](const Conv2D&) { return "conv2d"; },
                        [](const Linear&) { return "linear"; },
                        [](const ReLU&) { return "relu"; },
                        [](const Sigmoid&) { return "sigmoid"; },
                        [](const Softmax&) { return "softmax"; },
                        [](const MaxPool2D&) { return "maxpool2d"; },
                        [](const BatchNorm2D&) { return "batchnorm2d"; },
                        [](const Flatten&) { return "flatten"; },
                    },
                    layer);
}

bool HasParameters(const Layer& layer) {
  return std::holds_alternative<Conv2D>(layer) || std::holds_alternative<Linear>(layer) ||
         std::holds_alternative<BatchNorm2D>(layer);
}

Shape LayerOutputShape(const Layer& layer, const Shape& in, std::size_t index) {
  return std::visit(
      Overloaded{
          [&](const Conv2D& l) -> Shape {
            if (l.weights.rank() != 4 || l.bias.shape() != Shape{l.weights.dim(0)}) {
              ThrowMismatch(index, "conv weights [O,I,kh,kw] with bias [O]",
                            l.weights.shape());
            }
            if (l.stride.h == 0 || l.stride.w == 0) {
              throw Error(ErrorCode::kInvalidArgument,
                          "layer " + std::to_string(index) + ": stride must be >= 1");
            }
            RequireRank(index, in, 3, "[C,H,W]");
            if (in[0] != l.in_channels()) {
              ThrowMismatch(index, std::to_string(l.in_channels()) + " input channels", in);
            }
            if (in[1] + 2 * l.padding.h < l.kernel().h ||
                in[2] + 2 * l.padding.w < l.kernel().w) {
              ThrowMismatch(index, "spatial extent >= kernel", in);
            }
            return ops::ConvOutputShape(in, l.out_channels(), l.kernel(), l.stride, l.padding);
          },
          [&](const Linear& l) -> Shape {
            if (l.weights.rank() != 2 || l.bias.shape() != Shape{l.weights.dim(0)}) {
              ThrowMismatch(index, "linear weights [O,I] with bias [O]", l.weights.shape());
            }
            if (in != Shape{l.in_features()}) {
              ThrowMismatch(index, "[" + std::to_string(l.in_features()) + "]", in);
            }
            return {l.out_features()};
          },
          [&](const ReLU&) -> Shape { return in; },
          [&](const Sigmoid&) -> Shape { return in; },
          [&](const Softmax&) -> Shape {
            RequireRank(index, in, 1, "rank-1 logits");
            return in;
          },
          [&](const MaxPool2D& l) -> Shape {
            if (l.kernel.h == 0 || l.kernel.w == 0 || l.stride.h == 0 || l.stride.w == 0) {
              throw Error(ErrorCode::kInvalidArgument,
                          "layer " + std::to_string(index) + ": pool kernel/stride must be >= 1");
            }
            RequireRank(index, in, 3, "[C,H,W]");
            if (in[1] < l.kernel.h || in[2] < l.kernel.w ||
                (in[1] - l.kernel.h) % l.stride.h != 0 ||
                (in[2] - l.kernel.w) % l.stride.w != 0) {
              ThrowMismatch(index, "spatial dims tiled exactly by the pooling window", in);
            }
            return {in[0], (in[1] - l.kernel.h) / l.stride.h + 1,
                    (in[2] - l.kernel.w) / l.stride.w + 1};
          },
          [&](const BatchNorm2D& l) -> Shape {
            RequireRank(index, in, 3, "[C,H,W]");
            const Shape ch{l.channels()};
            if (in[0] != l.channels() || l.beta.shape() != ch || l.running_mean.shape() != ch ||
                l.running_var.shape() != ch) {
              ThrowMismatch(index, std::to_string(l.channels()) + " batch-norm channels", in);
            }
            for (double v : l.running_var.values()) {
              if (!(v >= 0.0) || !(v + l.eps > 0.0)) {
                throw Error(ErrorCode::kInvalidArgument,
                            "layer " + std::to_string(index) +
                                ": batch-norm running_var must be >= 0 with var+eps > 0");
              }
            }
            return in;
          },
          [&](const Flatten&) -> Shape { return {ShapeSize(in)}; },
      },
      layer);
}

std::vector<Shape> InferShapes(const Network& network, const Shape& input_shape) {
  std::vector<Shape> shapes;
  shapes.reserve(network.layers.size());
  Shape current = input_shape;
  for (std::size_t i = 0; i < network.layers.size(); ++i) {
    current = LayerOutputShape(network.layers[i], current, i);
    shapes.push_back(current);
  }
  return shapes;
}

PoolResult ApplyMaxPool(const MaxPool2D& layer, const Tensor& input) {
  const Shape out_shape = LayerOutputShape(Layer{layer}, input.shape(), 0);
  PoolResult result{Tensor(out_shape), std::vector<std::size_t>(ShapeSize(out_shape))};
  const std::size_t channels = input.dim(0), height = input.dim(1), width = input.dim(2);
  std::size_t k = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t oh = 0; oh < out_shape[1]; ++oh) {
      for (std::size_t ow = 0; ow < out_shape[2]; ++ow, ++k) {
        std::size_t best = (c * height + oh * layer.stride.h) * width + ow * layer.stride.w;
        double best_value = input[best];
        // Row-major scan with strict '>' keeps the lowest index on ties.
        for (std::size_t i = 0; i < layer.kernel.h; ++i) {
          for (std::size_t j = 0; j < layer.kernel.w; ++j) {
            const std::size_t idx =
                (c * height + oh * layer.stride.h + i) * width + ow * layer.stride.w + j;
            if (input[idx] > best_value) {
              best_value = input[idx];
              best = idx;
            }
          }
        }
        result.output[k] = best_value;
        result.switches[k] = best;
      }
    }
  }
  return result;
}

Tensor ApplyLayer(const Layer& layer, const Tensor& input, std::vector<std::size_t>* switches) {
  return std::visit(
      Overloaded{
          [&](const Conv2D& l) {
            return ops::Conv2DForward(input, l.weights, l.bias, l.stride, l.padding);
          },
          [&](const Linear& l) { return ops::LinearForward(input, l.weights, l.bias); },
          [&](const ReLU&) {
            Tensor out = input;
            for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
            return out;
          },
          [&](const Sigmoid&) {
            Tensor out = input;
            for (double& v : out.values()) v = ops::Sigmoid(v);
            return out;
          },
          [&](const Softmax&) { return ops::SoftmaxOf(input.values()); },
          [&](const MaxPool2D& l) {
            PoolResult r = ApplyMaxPool(l, input);
            if (switches) *switches = std::move(r.switches);
            return std::move(r.output);
          },
          [&](const BatchNorm2D& l) {
            Tensor out = input;
            const std::size_t plane = input.dim(1) * input.dim(2);
            for (std::size_t c = 0; c < l.channels(); ++c) {
              const double scale = l.gamma[c] / std::sqrt(l.running_var[c] + l.eps);
              for (std::size_t p = 0; p < plane; ++p) {
                double& v = out[c * plane + p];
                v = (v - l.running_mean[c]) * scale + l.beta[c];
              }
            }
            return out;
          },
          [&](const Flatten&) { return input.Reshaped({input.size()}); },
      },
      layer);
}

ForwardResult Forward(const Network& network, const Tensor& input) {
  if (input.shape() != network.input_shape) {
    throw Error(ErrorCode::kShapeMismatch, "network input: expected " +
                                               ShapeToString(network.input_shape) + ", got " +
                                               ShapeToString(input.shape()));
  }
  InferShapes(network, input.shape());
  ForwardResult result;
  result.trace.resize(network.layers.size());
  Tensor current = input;
  for (std::size_t i = 0; i < network.layers.size(); ++i) {
    LayerRecord& record = result.trace[i];
    record.input = current;
    current = ApplyLayer(network.layers[i], current, &record.switches);
    if (!current.AllFinite()) {
      throw Error(ErrorCode::kNonFiniteValue,
                  "layer " + std::to_string(i) + " produced a non-finite activation");
    }
    record.output = current;
  }
  result.output = std::move(current);
  return result;
}

Tensor Predict(const Network& network, const Tensor& input) {
  if (input.shape() != network.input_shape) {
    throw Error(ErrorCode::kShapeMismatch, "network input: expected " +
                                               ShapeToString(network.input_shape) + ", got " +
                                               ShapeToString(input.shape()));
  }
  InferShapes(network, input.shape());
  Tensor current = input;
  for (std::size_t i = 0; i < network.layers.size(); ++i) {
    current = ApplyLayer(network.layers[i], current, nullptr);
    if (!current.AllFinite()) {
      throw Error(ErrorCode::kNonFiniteValue,
                  "layer " + std::to_string(i) + " produced a non-finite activation");
    }
  }
  return current;
}

Network FoldBatchNorm(const Network& network) {
  Network folded;
  folded.input_shape = network.input_shape;
  for (std::size_t i = 0; i < network.layers.size(); ++i) {
    const auto* bn = std::get_if<BatchNorm2D>(&network.layers[i]);
    if (!bn) {
      folded.layers.push_back(network.layers[i]);
      continue;
    }
    auto* conv = folded.layers.empty() ? nullptr : std::get_if<Conv2D>(&folded.layers.back());
    if (conv == nullptr || i == 0 || !std::holds_alternative<Conv2D>(network.layers[i - 1])) {
      throw Error(ErrorCode::kCannotFold, "layer " + std::to_string(i) +
                                              ": batch norm is not preceded by a convolution");
    }
    if (conv->out_channels() != bn->channels()) {
      throw Error(ErrorCode::kShapeMismatch,
                  "layer " + std::to_string(i) + ": batch-norm channel count differs from conv");
    }
    const std::size_t per_out = conv->weights.size() / conv->out_channels();
    for (std::size_t o = 0; o < conv->out_channels(); ++o) {
      const double scale = bn->gamma[o] / std::sqrt(bn->running_var[o] + bn->eps);
      for (std::size_t j = 0; j < per_out; ++j) conv->weights[o * per_out + j] *= scale;
      conv->bias[o] = (conv->bias[o] - bn->running_mean[o]) * scale + bn->beta[o];
    }
  }
  return folded;
}

bool IsCanonized(const Network& network) {
  return std::none_of(network.layers.begin(), network.layers.end(),
                      [](const Layer& l) { return std::holds_alternative<BatchNorm2D>(l); });
}

std::size_t CountConv(const Network& network) {
  return std::count_if(network.layers.begin(), network.layers.end(),
                       [](const Layer& l) { return std::holds_alternative<Conv2D>(l); });
}

std::size_t CountLinear(const Network& network) {
  return std::count_if(network.layers.begin(), network.layers.end(),
                       [](const Layer& l) { return std::holds_alternative<Linear>(l); });
}

namespace ops {

Shape ConvOutputShape(const Shape& input, std::size_t out_channels, Window kernel,
                      Window stride, Window padding) {
  return {out_channels, (input[1] + 2 * padding.h - kernel.h) / stride.h + 1,
          (input[2] + 2 * padding.w - kernel.w) / stride.w + 1};
}

Tensor Conv2DForward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                     Window stride, Window padding) {
  const std::size_t out_ch = weights.dim(0), in_ch = weights.dim(1);
  const std::size_t kh = weights.dim(2), kw = weights.dim(3);
  const std::size_t in_h = input.dim(1), in_w = input.dim(2);
  const Shape out_shape = ConvOutputShape(input.shape(), out_ch, {kh, kw}, stride, padding);
  const std::size_t out_h = out_shape[1], out_w = out_shape[2];
  Tensor out(out_shape);
  const double* x = input.values().data();
  const double* w = weights.values().data();
  double* y = out.values().data();
  for (std::size_t o = 0; o < out_ch; ++o) {
    double* y_plane = y + o * out_h * out_w;
    if (!bias.empty()) std::fill(y_plane, y_plane + out_h * out_w, bias[o]);
    for (std::size_t c = 0; c < in_ch; ++c) {
      const double* x_plane = x + c * in_h * in_w;
      for (std::size_t i = 0; i < kh; ++i) {
        const auto [oh_lo, oh_hi] = ValidRange(out_h, in_h, stride.h, i, padding.h);
        for (std::size_t j = 0; j < kw; ++j) {
          const double wv = w[((o * in_ch + c) * kh + i) * kw + j];
          const auto [ow_lo, ow_hi] = ValidRange(out_w, in_w, stride.w, j, padding.w);
          for (std::size_t oh = oh_lo; oh < oh_hi; ++oh) {
            const double* x_row = x_plane + (oh * stride.h + i - padding.h) * in_w;
            double* y_row = y_plane + oh * out_w;
            if (stride.w == 1) {
              const double* xs = x_row + j - padding.w;
              for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) y_row[ow] += wv * xs[ow];
            } else {
              for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) {
                y_row[ow] += wv * x_row[ow * stride.w + j - padding.w];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor Conv2DBackwardInput(const Tensor& grad_output, const Tensor& weights,
                           const Shape& input_shape, Window stride, Window padding) {
  const std::size_t out_ch = weights.dim(0), in_ch = weights.dim(1);
  const std::size_t kh = weights.dim(2), kw = weights.dim(3);
  const std::size_t in_h = input_shape[1], in_w = input_shape[2];
  const std::size_t out_h = grad_output.dim(1), out_w = grad_output.dim(2);
  Tensor grad_in(input_shape);
  const double* g = grad_output.values().data();
  const double* w = weights.values().data();
  double* gx = grad_in.values().data();
  for (std::size_t o = 0; o < out_ch; ++o) {
    const double* g_plane = g + o * out_h * out_w;
    for (std::size_t c = 0; c < in_ch; ++c) {
      double* gx_plane = gx + c * in_h * in_w;
      for (std::size_t i = 0; i < kh; ++i) {
        const auto [oh_lo, oh_hi] = ValidRange(out_h, in_h, stride.h, i, padding.h);
        for (std::size_t j = 0; j < kw; ++j) {
          const double wv = w[((o * in_ch + c) * kh + i) * kw + j];
          const auto [ow_lo, ow_hi] = ValidRange(out_w, in_w, stride.w, j, padding.w);
          for (std::size_t oh = oh_lo; oh < oh_hi; ++oh) {
            double* gx_row = gx_plane + (oh * stride.h + i - padding.h) * in_w;
            const double* g_row = g_plane + oh * out_w;
            for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) {
              gx_row[ow * stride.w + j - padding.w] += wv * g_row[ow];
            }
          }
        }
      }
    }
  }
  return grad_in;
}

void Conv2DBackwardWeights(const Tensor& input, const Tensor& grad_output, Window stride,
                           Window padding, Tensor& grad_weights) {
  const std::size_t out_ch = grad_weights.dim(0), in_ch = grad_weights.dim(1);
  const std::size_t kh = grad_weights.dim(2), kw = grad_weights.dim(3);
  const std::size_t in_h = input.dim(1), in_w = input.dim(2);
  const std::size_t out_h = grad_output.dim(1), out_w = grad_output.dim(2);
  const double* x = input.values().data();
  const double* g = grad_output.values().data();
  double* gw = grad_weights.values().data();
  for (std::size_t o = 0; o < out_ch; ++o) {
    const double* g_plane = g + o * out_h * out_w;
    for (std::size_t c = 0; c < in_ch; ++c) {
      const double* x_plane = x + c * in_h * in_w;
      for (std::size_t i = 0; i < kh; ++i) {
        const auto [oh_lo, oh_hi] = ValidRange(out_h, in_h, stride.h, i, padding.h);
        for (std::size_t j = 0; j < kw; ++j) {
          const auto [ow_lo, ow_hi] = ValidRange(out_w, in_w, stride.w, j, padding.w);
          double acc = 0.0;
          for (std::size_t oh = oh_lo; oh < oh_hi; ++oh) {
            const double* x_row = x_plane + (oh * stride.h + i - padding.h) * in_w;
            const double* g_row = g_plane + oh * out_w;
            for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) {
              acc += g_row[ow] * x_row[ow * stride.w + j - padding.w];
            }
          }
          gw[((o * in_ch + c) * kh + i) * kw + j] += acc;
        }
      }
    }
  }
}

Tensor LinearForward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  const std::size_t out_f = weights.dim(0), in_f = weights.dim(1);
  Tensor out({out_f});
  for (std::size_t o = 0; o < out_f; ++o) {
    double acc = bias.empty() ? 0.0 : bias[o];
    const double* row = weights.values().data() + o * in_f;
    for (std::size_t i = 0; i < in_f; ++i) acc += row[i] * input[i];
    out[o] = acc;
  }
  return out;
}

Tensor LinearBackwardInput(const Tensor& grad_output, const Tensor& weights) {
  const std::size_t out_f = weights.dim(0), in_f = weights.dim(1);
  Tensor grad_in({in_f});
  for (std::size_t o = 0; o < out_f; ++o) {
    const double g = grad_output[o];
    const double* row = weights.values().data() + o * in_f;
    for (std::size_t i = 0; i < in_f; ++i) grad_in[i] += row[i] * g;
  }
  return grad_in;
}

double Sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor SoftmaxOf(std::span<const double> logits) {
  Tensor out({logits.size()});
  if (logits.empty()) return out;
  const double m = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    total += out[i];
  }
  for (double& v : out.values()) v /= total;
  return out;
}

}  // namespace ops
}  // namespace cbmx::nn
