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

#ifndef CBMX_SYNTHETIC_HPP_
#define CBMX_SYNTHETIC_HPP_

// Instance-level concept datasets: every image shows a few flat-coloured
// geometric parts on a noisy grey background. Concepts are "part p is
// visible" and "part p has colour c"; keypoints are the part centres.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cbmx/cbm.hpp"
#include "cbmx/tensor.hpp"

namespace cbmx::synth {

inline constexpr std::size_t kMaxParts = 6;
inline constexpr std::size_t kMaxColors = 6;

struct PartKeypoint {
  int part_id = 0;
  int x = -1;  // column
  int y = -1;  // row
  bool visible = false;
  friend bool operator==(const PartKeypoint&, const PartKeypoint&) = default;
};

struct GeneratorConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t n_parts = 3;
  std::size_t n_colors = 3;
  std::size_t n_classes = 8;
  std::size_t samples = 2500;
  std::uint64_t seed = 0;
  double noise = 0.05;  // background noise amplitude
  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

struct SyntheticSample {
  Tensor image;  // [3,H,W] in [0,1]
  std::vector<bool> concepts;
  std::size_t class_label = 0;
  std::vector<PartKeypoint> keypoints;  // one per part, indexed by part id
  friend bool operator==(const SyntheticSample&, const SyntheticSample&) = default;
};

// First matching entry wins; no match gives default_class.
struct ClassRuleEntry {
  std::size_t concept_index = 0;
  std::size_t class_label = 0;
  friend bool operator==(const ClassRuleEntry&, const ClassRuleEntry&) = default;
};

struct ClassRule {
  std::vector<ClassRuleEntry> entries;
  std::size_t default_class = 0;
  friend bool operator==(const ClassRule&, const ClassRule&) = default;
};

struct Dataset {
  GeneratorConfig config;
  std::vector<std::string> part_names;
  std::vector<std::string> color_names;
  std::vector<std::string> concept_names;
  std::vector<std::string> class_names;
  ClassRule rule;
  std::vector<SyntheticSample> train;
  std::vector<SyntheticSample> test;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

void ValidateConfig(const GeneratorConfig& config);

std::size_t NumConcepts(const GeneratorConfig& config);
std::size_t PresenceConcept(std::size_t part);
std::size_t ColorConcept(const GeneratorConfig& config, std::size_t part, std::size_t color);
// Part a concept refers to.
std::size_t ConceptPart(const GeneratorConfig& config, std::size_t concept_index);

std::vector<std::string> PartNames(const GeneratorConfig& config);
std::vector<std::string> ColorNames(const GeneratorConfig& config);
std::vector<std::string> ConceptNames(const GeneratorConfig& config);
std::vector<std::string> ClassNames(const GeneratorConfig& config, const ClassRule& rule);

// Decision list over the colour concepts of every part but the last,
// followed by the presence concepts; the last part's colours never appear.
ClassRule MakeClassRule(const GeneratorConfig& config);
std::size_t ApplyClassRule(const ClassRule& rule, const std::vector<bool>& concepts);

std::array<double, 3> PaletteColor(std::size_t color);
std::size_t PartRadius(const GeneratorConfig& config);

// Each part lives in its own horizontal band of rows, [first, last), so
// parts never overlap while their positions still vary from sample to sample.
struct PartBand {
  std::size_t first = 0;
  std::size_t last = 0;
};
PartBand PartRows(const GeneratorConfig& config, std::size_t part);
// Whether offset (dx, dy) from the part centre is covered by the part shape.
bool PartCovers(std::size_t part, int dx, int dy, int radius);

Dataset GenerateDataset(const GeneratorConfig& config);

// Each concept mapped to the part it describes.
std::map<std::size_t, std::size_t> DefaultConceptToPart(const GeneratorConfig& config);

cbm::TrainingSet ToTrainingSet(std::span<const SyntheticSample> samples);

}  // namespace cbmx::synth

#endif  // CBMX_SYNTHETIC_HPP_
