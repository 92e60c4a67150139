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

#include "cbmx/cbm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cbmx/autodiff.hpp"
#include "cbmx/error.hpp"

namespace cbmx::cbm {
namespace {

using autodiff::LayerGradients;
using Grads = std::vector<LayerGradients>;

void AddScaled(Tensor& acc, const Tensor& g, double scale) {
  if (g.empty()) return;
  if (acc.empty()) acc = Tensor(g.shape());
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += scale * g[i];
}

void Accumulate(Grads& acc, const Grads& g) {
  if (acc.size() < g.size()) acc.resize(g.size());
  for (std::size_t l = 0; l < g.size(); ++l) {
    AddScaled(acc[l].weights, g[l].weights, 1.0);
    AddScaled(acc[l].bias, g[l].bias, 1.0);
  }
}

// SGD with momentum: v <- mu v - lr g; p <- p + v.
class MomentumSgd {
 public:
  MomentumSgd(const nn::Network& network, double lr, double momentum)
      : lr_(lr), momentum_(momentum), velocity_(network.layers.size()) {}

  void Step(nn::Network& network, const Grads& grads, double scale) {
    for (std::size_t l = 0; l < network.layers.size(); ++l) {
      if (l >= grads.size()) break;
      std::visit(
          [&](auto& layer) {
            using T = std::decay_t<decltype(layer)>;
            if constexpr (std::is_same_v<T, nn::Conv2D> || std::is_same_v<T, nn::Linear>) {
              Update(layer.weights, velocity_[l].weights, grads[l].weights, scale);
              Update(layer.bias, velocity_[l].bias, grads[l].bias, scale);
            } else if constexpr (std::is_same_v<T, nn::BatchNorm2D>) {
              Update(layer.gamma, velocity_[l].weights, grads[l].weights, scale);
              Update(layer.beta, velocity_[l].bias, grads[l].bias, scale);
            }
          },
          network.layers[l]);
    }
  }

 private:
  void Update(Tensor& param, Tensor& velocity, const Tensor& grad, double scale) {
    if (grad.empty()) return;
    if (velocity.empty()) velocity = Tensor(param.shape());
    for (std::size_t i = 0; i < param.size(); ++i) {
      velocity[i] = momentum_ * velocity[i] - lr_ * scale * grad[i];
      param[i] += velocity[i];
    }
  }

  double lr_;
  double momentum_;
  Grads velocity_;
};

// Runs shuffled mini-batch epochs; sample_step returns the per-sample loss
// and adds that sample's gradients into the accumulator.
template <class SampleStep, class EpochEnd>
void RunEpochs(std::size_t n, const TrainConfig& config, Rng& rng,
               std::vector<std::pair<nn::Network*, MomentumSgd*>> targets, SampleStep sample_step,
               EpochEnd epoch_end) {
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.Shuffle(order);
    double loss_total = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      std::vector<Grads> acc(targets.size());
      for (std::size_t i = start; i < stop; ++i) loss_total += sample_step(order[i], acc);
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (std::size_t t = 0; t < targets.size(); ++t) {
        targets[t].second->Step(*targets[t].first, acc[t], scale);
      }
    }
    epoch_end(epoch, loss_total / static_cast<double>(n));
  }
}

std::size_t CountCorrectConcepts(const Tensor& logits, const std::vector<double>& labels) {
  std::size_t correct = 0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    const bool present = nn::ops::Sigmoid(logits[k]) >= kPresenceThreshold;
    if (present == (labels[k] >= 0.5)) ++correct;
  }
  return correct;
}

void CheckTrainingSet(const CbmModel& model, const TrainingSet& data) {
  if (data.images.empty()) throw Error(ErrorCode::kEmpty, "EmptyDataset: no training samples");
  if (data.concepts.size() != data.images.size() || data.labels.size() != data.images.size()) {
    throw Error(ErrorCode::kLengthMismatch, "images, concepts and labels differ in length");
  }
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    if (data.images[i].shape() != model.g.input_shape) {
      throw Error(ErrorCode::kShapeMismatch, "sample " + std::to_string(i) + " image shape " +
                                                 ShapeToString(data.images[i].shape()));
    }
    if (data.concepts[i].size() != model.num_concepts()) {
      throw Error(ErrorCode::kShapeMismatch, "sample " + std::to_string(i) + " concept arity");
    }
    if (data.labels[i] >= model.num_classes()) {
      throw Error(ErrorCode::kIndexOutOfRange, "sample " + std::to_string(i) + " class label");
    }
  }
}

}  // namespace

void ValidateModel(const CbmModel& model) {
  const auto g_shapes = nn::InferShapes(model.g, model.g.input_shape);
  const auto f_shapes = nn::InferShapes(model.f, model.f.input_shape);
  const Shape k_shape{model.num_concepts()};
  if (g_shapes.empty() || g_shapes.back() != k_shape) {
    throw Error(ErrorCode::kShapeMismatch, "g must output " + ShapeToString(k_shape));
  }
  if (model.f.input_shape != k_shape) {
    throw Error(ErrorCode::kShapeMismatch, "f must consume " + ShapeToString(k_shape));
  }
  if (f_shapes.empty() || f_shapes.back() != Shape{model.num_classes()}) {
    throw Error(ErrorCode::kShapeMismatch,
                "f must output " + std::to_string(model.num_classes()) + " class logits");
  }
}

ConceptPrediction ConceptsFromLogits(const Tensor& logits) {
  ConceptPrediction p{logits, logits, std::vector<bool>(logits.size())};
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p.values[k] = nn::ops::Sigmoid(logits[k]);
    p.presence[k] = p.values[k] >= kPresenceThreshold;
  }
  return p;
}

Tensor BottleneckInput(const CbmModel& model, const ConceptPrediction& concepts) {
  return model.sigmoid_between ? concepts.values : concepts.logits;
}

double DisplayedConceptValue(const CbmModel& model, double bottleneck_value) {
  return model.sigmoid_between ? bottleneck_value : nn::ops::Sigmoid(bottleneck_value);
}

ClassOutput EvaluateBottleneck(const CbmModel& model, const Tensor& bottleneck) {
  ClassOutput out;
  out.logits = nn::Predict(model.f, bottleneck);
  out.probs = nn::ops::SoftmaxOf(out.logits.values());
  return out;
}

Prediction Predict(const CbmModel& model, const Tensor& image) {
  Prediction p;
  p.concepts = ConceptsFromLogits(nn::Predict(model.g, image));
  p.bottleneck = BottleneckInput(model, p.concepts);
  ClassOutput c = EvaluateBottleneck(model, p.bottleneck);
  p.class_logits = std::move(c.logits);
  p.class_probs = std::move(c.probs);
  return p;
}

InterventionResult Intervene(const CbmModel& model, const Tensor& bottleneck,
                             const std::map<std::size_t, double>& overrides) {
  if (bottleneck.shape() != Shape{model.num_concepts()}) {
    throw Error(ErrorCode::kShapeMismatch, "concept vector must have shape " +
                                               ShapeToString({model.num_concepts()}));
  }
  InterventionResult r;
  r.bottleneck = bottleneck;
  for (const auto& [index, value] : overrides) {
    if (index >= model.num_concepts()) {
      throw Error(ErrorCode::kIndexOutOfRange, "concept index " + std::to_string(index));
    }
    if (!std::isfinite(value)) {
      throw Error(ErrorCode::kInvalidArgument, "override value must be finite");
    }
    r.bottleneck[index] = value;
  }
  r.old_probs = EvaluateBottleneck(model, bottleneck).probs;
  ClassOutput updated = EvaluateBottleneck(model, r.bottleneck);
  r.new_logits = std::move(updated.logits);
  r.new_probs = std::move(updated.probs);
  r.delta = Tensor(r.new_probs.shape());
  for (std::size_t c = 0; c < r.delta.size(); ++c) r.delta[c] = r.new_probs[c] - r.old_probs[c];
  return r;
}

const char* RegimeName(Regime regime) {
  switch (regime) {
    case Regime::kIndependent: return "independent";
    case Regime::kSequential: return "sequential";
    case Regime::kJoint: return "joint";
  }
  return "unknown";
}

void ValidateTrainConfig(const TrainConfig& config) {
  if (!(config.lambda >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "lambda must be >= 0");
  if (config.epochs < 1 || config.batch_size < 1) {
    throw Error(ErrorCode::kInvalidArgument, "epochs and batch_size must be >= 1");
  }
  if (!(config.learning_rate > 0.0) || !(config.momentum >= 0.0) || !(config.momentum < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "need learning_rate > 0 and 0 <= momentum < 1");
  }
}

void InitializeNetwork(nn::Network& network, Rng& rng) {
  for (nn::Layer& layer : network.layers) {
    auto init = [&rng](Tensor& weights, Tensor& bias, std::size_t fan_in) {
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (double& w : weights.values()) w = rng.Uniform(-bound, bound);
      for (double& b : bias.values()) b = 0.0;
    };
    if (auto* conv = std::get_if<nn::Conv2D>(&layer)) {
      init(conv->weights, conv->bias, conv->in_channels() * conv->kernel().h * conv->kernel().w);
    } else if (auto* lin = std::get_if<nn::Linear>(&layer)) {
      init(lin->weights, lin->bias, lin->in_features());
    }
  }
}

nn::Network MakeConceptNetwork(const Shape& image_shape, std::size_t num_concepts) {
  if (image_shape.size() != 3) {
    throw Error(ErrorCode::kShapeMismatch, "concept network needs a [C,H,W] input");
  }
  auto pool_factor = [](std::size_t h, std::size_t w) -> std::size_t {
    for (std::size_t p : {4, 2}) {
      if (h % p == 0 && w % p == 0) return p;
    }
    return 1;
  };
  nn::Network g;
  g.input_shape = image_shape;
  std::size_t channels = image_shape[0], h = image_shape[1], w = image_shape[2];
  for (std::size_t out_channels : {8, 16}) {
    g.layers.emplace_back(nn::Conv2D{Tensor({out_channels, channels, 3, 3}),
                                     Tensor({out_channels}), {1, 1}, {1, 1}});
    g.layers.emplace_back(nn::ReLU{});
    const std::size_t p = pool_factor(h, w);
    if (p > 1) {
      g.layers.emplace_back(nn::MaxPool2D{{p, p}, {p, p}});
      h /= p;
      w /= p;
    }
    channels = out_channels;
  }
  g.layers.emplace_back(nn::Flatten{});
  g.layers.emplace_back(
      nn::Linear{Tensor({num_concepts, channels * h * w}), Tensor({num_concepts})});
  return g;
}

nn::Network MakeClassNetwork(std::size_t num_concepts, std::size_t num_classes) {
  nn::Network f;
  f.input_shape = {num_concepts};
  f.layers.emplace_back(nn::Linear{Tensor({num_classes, num_concepts}), Tensor({num_classes})});
  return f;
}

CbmModel MakeDefaultModel(const Shape& image_shape, std::vector<std::string> concept_names,
                          std::vector<std::string> class_names, bool sigmoid_between,
                          std::uint64_t seed) {
  CbmModel model;
  model.g = MakeConceptNetwork(image_shape, concept_names.size());
  model.f = MakeClassNetwork(concept_names.size(), class_names.size());
  model.sigmoid_between = sigmoid_between;
  model.concept_names = std::move(concept_names);
  model.class_names = std::move(class_names);
  Rng rng(seed);
  InitializeNetwork(model.g, rng);
  InitializeNetwork(model.f, rng);
  ValidateModel(model);
  return model;
}

History TrainConceptModel(nn::Network& g, std::span<const Tensor> images,
                          std::span<const std::vector<double>> concepts,
                          const TrainConfig& config, Rng& rng) {
  ValidateTrainConfig(config);
  if (images.empty()) throw Error(ErrorCode::kEmpty, "EmptyDataset: no images");
  if (concepts.size() != images.size()) {
    throw Error(ErrorCode::kLengthMismatch, "images and concept labels differ in length");
  }
  History history;
  MomentumSgd opt(g, config.learning_rate, config.momentum);
  std::size_t correct = 0;
  RunEpochs(
      images.size(), config, rng, {{&g, &opt}},
      [&](std::size_t idx, std::vector<Grads>& acc) {
        const nn::ForwardResult fw = nn::Forward(g, images[idx]);
        const autodiff::LossSpec loss = autodiff::BinaryCrossEntropyPerOutput{concepts[idx]};
        correct += CountCorrectConcepts(fw.output, concepts[idx]);
        Accumulate(acc[0], autodiff::Backward(g, fw.trace, autodiff::LossGradient(fw.output, loss),
                                              true, false)
                               .param_grads);
        return autodiff::EvaluateLoss(fw.output, loss);
      },
      [&](std::size_t epoch, double mean_loss) {
        const double cells = static_cast<double>(images.size() * concepts[0].size());
        history.push_back({"g", epoch, mean_loss, static_cast<double>(correct) / cells, -1.0});
        correct = 0;
      });
  return history;
}

History TrainClassModel(nn::Network& f, std::span<const Tensor> bottlenecks,
                        std::span<const std::size_t> labels, const TrainConfig& config,
                        Rng& rng) {
  ValidateTrainConfig(config);
  if (bottlenecks.empty()) throw Error(ErrorCode::kEmpty, "EmptyDataset: no concept vectors");
  if (labels.size() != bottlenecks.size()) {
    throw Error(ErrorCode::kLengthMismatch, "concept vectors and labels differ in length");
  }
  History history;
  MomentumSgd opt(f, config.learning_rate, config.momentum);
  std::size_t correct = 0;
  RunEpochs(
      bottlenecks.size(), config, rng, {{&f, &opt}},
      [&](std::size_t idx, std::vector<Grads>& acc) {
        const nn::ForwardResult fw = nn::Forward(f, bottlenecks[idx]);
        const autodiff::LossSpec loss = autodiff::SoftmaxCrossEntropy{labels[idx]};
        if (Argmax(fw.output.values()) == labels[idx]) ++correct;
        Accumulate(acc[0], autodiff::Backward(f, fw.trace, autodiff::LossGradient(fw.output, loss),
                                              true)
                               .param_grads);
        return autodiff::EvaluateLoss(fw.output, loss);
      },
      [&](std::size_t epoch, double mean_loss) {
        history.push_back({"f", epoch, mean_loss, -1.0,
                           static_cast<double>(correct) / static_cast<double>(labels.size())});
        correct = 0;
      });
  return history;
}

TrainResult Train(CbmModel model, const TrainingSet& data, const TrainConfig& config) {
  ValidateTrainConfig(config);
  ValidateModel(model);
  CheckTrainingSet(model, data);
  Rng rng(config.seed);
  TrainResult result;
  const std::size_t n = data.images.size();

  if (config.regime == Regime::kIndependent || config.regime == Regime::kSequential) {
    result.history = TrainConceptModel(model.g, data.images, data.concepts, config, rng);
    std::vector<Tensor> bottlenecks(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (config.regime == Regime::kIndependent) {
        bottlenecks[i] = Tensor({model.num_concepts()}, data.concepts[i]);
      } else {
        bottlenecks[i] =
            BottleneckInput(model, ConceptsFromLogits(nn::Predict(model.g, data.images[i])));
      }
    }
    History f_history = TrainClassModel(model.f, bottlenecks, data.labels, config, rng);
    result.history.insert(result.history.end(), f_history.begin(), f_history.end());
    result.model = std::move(model);
    return result;
  }

  // Joint: L = CE(f(h(g(x))), y) + lambda * sum_k BCE(g_k(x), c_k).
  MomentumSgd g_opt(model.g, config.learning_rate, config.momentum);
  MomentumSgd f_opt(model.f, config.learning_rate, config.momentum);
  std::size_t concept_correct = 0, class_correct = 0;
  RunEpochs(
      n, config, rng, {{&model.g, &g_opt}, {&model.f, &f_opt}},
      [&](std::size_t idx, std::vector<Grads>& acc) {
        const nn::ForwardResult g_fw = nn::Forward(model.g, data.images[idx]);
        const ConceptPrediction concepts = ConceptsFromLogits(g_fw.output);
        const Tensor bottleneck = BottleneckInput(model, concepts);
        const nn::ForwardResult f_fw = nn::Forward(model.f, bottleneck);
        const autodiff::LossSpec class_loss = autodiff::SoftmaxCrossEntropy{data.labels[idx]};
        const autodiff::LossSpec concept_loss =
            autodiff::BinaryCrossEntropyPerOutput{data.concepts[idx]};

        autodiff::GradientBundle f_grads = autodiff::Backward(
            model.f, f_fw.trace, autodiff::LossGradient(f_fw.output, class_loss), true);
        Tensor grad_c = std::move(f_grads.input_grad);
        if (model.sigmoid_between) {
          for (std::size_t k = 0; k < grad_c.size(); ++k) {
            grad_c[k] *= concepts.values[k] * (1.0 - concepts.values[k]);
          }
        }
        if (config.lambda != 0.0) {
          const Tensor bce = autodiff::LossGradient(g_fw.output, concept_loss);
          for (std::size_t k = 0; k < grad_c.size(); ++k) grad_c[k] += config.lambda * bce[k];
        }
        Accumulate(acc[0], autodiff::Backward(model.g, g_fw.trace, grad_c, true, false).param_grads);
        Accumulate(acc[1], f_grads.param_grads);

        concept_correct += CountCorrectConcepts(g_fw.output, data.concepts[idx]);
        if (Argmax(f_fw.output.values()) == data.labels[idx]) ++class_correct;
        return autodiff::EvaluateLoss(f_fw.output, class_loss) +
               config.lambda * autodiff::EvaluateLoss(g_fw.output, concept_loss);
      },
      [&](std::size_t epoch, double mean_loss) {
        const double cells = static_cast<double>(n * model.num_concepts());
        result.history.push_back({"joint", epoch, mean_loss,
                                  static_cast<double>(concept_correct) / cells,
                                  static_cast<double>(class_correct) / static_cast<double>(n)});
        concept_correct = class_correct = 0;
      });
  result.model = std::move(model);
  return result;
}

double ConceptBinaryAccuracy(std::span<const Tensor> values,
                             std::span<const std::vector<double>> labels) {
  if (values.size() != labels.size()) {
    throw Error(ErrorCode::kLengthMismatch, "predictions and labels differ in length");
  }
  std::size_t cells = 0, correct = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].size() != labels[i].size()) {
      throw Error(ErrorCode::kLengthMismatch, "sample " + std::to_string(i) + " concept arity");
    }
    for (std::size_t k = 0; k < values[i].size(); ++k) {
      ++cells;
      if ((values[i][k] >= kPresenceThreshold) == (labels[i][k] >= 0.5)) ++correct;
    }
  }
  if (cells == 0) throw Error(ErrorCode::kEmpty, "no predictions to score");
  return static_cast<double>(correct) / static_cast<double>(cells);
}

double Top1Accuracy(std::span<const Tensor> class_logits, std::span<const std::size_t> labels) {
  if (class_logits.size() != labels.size()) {
    throw Error(ErrorCode::kLengthMismatch, "logits and labels differ in length");
  }
  if (labels.empty()) throw Error(ErrorCode::kEmpty, "no predictions to score");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (Argmax(class_logits[i].values()) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

std::size_t Argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace cbmx::cbm
