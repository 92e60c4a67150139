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

#ifndef CBMX_CBM_HPP_
#define CBMX_CBM_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cbmx/network.hpp"
#include "cbmx/rng.hpp"
#include "cbmx/tensor.hpp"

namespace cbmx::cbm {

// Concept bottleneck model y = f(h(g(x))) where g predicts k concept logits,
// h is a sigmoid when sigmoid_between is set (identity otherwise) and f maps
// the bottleneck to class logits.
struct CbmModel {
  nn::Network g;
  nn::Network f;
  bool sigmoid_between = true;
  std::vector<std::string> concept_names;
  std::vector<std::string> class_names;

  std::size_t num_concepts() const { return concept_names.size(); }
  std::size_t num_classes() const { return class_names.size(); }
  friend bool operator==(const CbmModel&, const CbmModel&) = default;
};

void ValidateModel(const CbmModel& model);

inline constexpr double kPresenceThreshold = 0.5;

struct ConceptPrediction {
  Tensor logits;
  Tensor values;               // sigmoid(logits)
  std::vector<bool> presence;  // values >= 0.5
};

struct Prediction {
  ConceptPrediction concepts;
  Tensor bottleneck;  // what f consumed
  Tensor class_logits;
  Tensor class_probs;
};

ConceptPrediction ConceptsFromLogits(const Tensor& logits);

// The f input for a concept prediction: values when sigmoid_between, else
// the raw logits.
Tensor BottleneckInput(const CbmModel& model, const ConceptPrediction& concepts);

// Displayed concept value for a bottleneck entry (the sigmoid value).
double DisplayedConceptValue(const CbmModel& model, double bottleneck_value);

Prediction Predict(const CbmModel& model, const Tensor& image);

struct ClassOutput {
  Tensor logits;
  Tensor probs;
};

ClassOutput EvaluateBottleneck(const CbmModel& model, const Tensor& bottleneck);

struct InterventionResult {
  Tensor bottleneck;  // after overrides
  Tensor old_probs;
  Tensor new_logits;
  Tensor new_probs;
  Tensor delta;       // new_probs - old_probs
};

// Overrides entries of the bottleneck vector and re-evaluates f only.
InterventionResult Intervene(const CbmModel& model, const Tensor& bottleneck,
                             const std::map<std::size_t, double>& overrides);

enum class Regime { kIndependent, kSequential, kJoint };

const char* RegimeName(Regime regime);

struct TrainConfig {
  Regime regime = Regime::kIndependent;
  double lambda = 1.0;
  std::size_t epochs = 6;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

void ValidateTrainConfig(const TrainConfig& config);

struct HistoryEntry {
  std::string phase;  // "g", "f" or "joint"
  std::size_t epoch = 0;
  double loss = 0.0;
  double concept_accuracy = -1.0;  // -1 when not applicable
  double class_accuracy = -1.0;
};

using History = std::vector<HistoryEntry>;

struct TrainingSet {
  std::vector<Tensor> images;
  std::vector<std::vector<double>> concepts;  // 0/1 per concept
  std::vector<std::size_t> labels;
};

struct TrainResult {
  CbmModel model;
  History history;
};

// He-style uniform init U(-sqrt(6/fan_in), +sqrt(6/fan_in)); zero biases.
void InitializeNetwork(nn::Network& network, Rng& rng);

nn::Network MakeConceptNetwork(const Shape& image_shape, std::size_t num_concepts);
nn::Network MakeClassNetwork(std::size_t num_concepts, std::size_t num_classes);

CbmModel MakeDefaultModel(const Shape& image_shape, std::vector<std::string> concept_names,
                          std::vector<std::string> class_names, bool sigmoid_between,
                          std::uint64_t seed);

// x -> c with per-concept binary cross-entropy on the concept logits. Never
// sees class labels.
History TrainConceptModel(nn::Network& g, std::span<const Tensor> images,
                          std::span<const std::vector<double>> concepts,
                          const TrainConfig& config, Rng& rng);

// c -> y with softmax cross-entropy. Never sees images.
History TrainClassModel(nn::Network& f, std::span<const Tensor> bottlenecks,
                        std::span<const std::size_t> labels, const TrainConfig& config,
                        Rng& rng);

TrainResult Train(CbmModel model, const TrainingSet& data, const TrainConfig& config);

double ConceptBinaryAccuracy(std::span<const Tensor> values,
                             std::span<const std::vector<double>> labels);

double Top1Accuracy(std::span<const Tensor> class_logits, std::span<const std::size_t> labels);

// Lowest index wins ties.
std::size_t Argmax(std::span<const double> values);

}  // namespace cbmx::cbm

#endif  // CBMX_CBM_HPP_
