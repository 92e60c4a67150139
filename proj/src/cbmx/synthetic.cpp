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

#include "cbmx/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include "cbmx/error.hpp"
#include "cbmx/rng.hpp"

namespace cbmx::synth {
namespace {

constexpr double kPresenceProbability = 0.75;
constexpr double kBackground = 0.5;

constexpr std::array<const char*, kMaxParts> kPartNames = {"head", "body", "tail",
                                                           "wing", "leg",  "beak"};
constexpr std::array<const char*, kMaxColors> kColorNames = {"red",    "green",   "blue",
                                                             "yellow", "magenta", "cyan"};
constexpr std::array<std::array<double, 3>, kMaxColors> kPalette = {{
    {0.90, 0.10, 0.10},
    {0.10, 0.75, 0.15},
    {0.15, 0.25, 0.95},
    {0.95, 0.85, 0.10},
    {0.85, 0.15, 0.85},
    {0.10, 0.85, 0.90},
}};

// Candidate decision-list literals in priority order.
std::vector<std::size_t> RuleLiterals(const GeneratorConfig& config) {
  std::vector<std::size_t> literals;
  for (std::size_t p = 0; p + 1 < config.n_parts; ++p) {
    for (std::size_t c = 0; c < config.n_colors; ++c) literals.push_back(ColorConcept(config, p, c));
  }
  for (std::size_t p = config.n_parts; p-- > 0;) literals.push_back(PresenceConcept(p));
  return literals;
}

}  // namespace

void ValidateConfig(const GeneratorConfig& config) {
  auto invalid = [](const std::string& why) { throw Error(ErrorCode::kConfigInvalid, why); };
  if (config.height < 16 || config.width < 16) invalid("image must be at least 16x16");
  if (config.n_parts < 1 || config.n_parts > kMaxParts) {
    invalid("n_parts must be in [1, " + std::to_string(kMaxParts) + "]");
  }
  if (config.n_colors < 1 || config.n_colors > kMaxColors) {
    invalid("n_colors must be in [1, " + std::to_string(kMaxColors) + "]");
  }
  if (config.n_classes < 2 || config.n_classes - 1 > RuleLiterals(config).size()) {
    invalid("n_classes must be in [2, " + std::to_string(RuleLiterals(config).size() + 1) + "]");
  }
  if (config.samples < 5) invalid("need at least 5 samples for an 80/20 split");
  if (!(config.noise >= 0.0) || config.noise > 0.5) invalid("noise must be in [0, 0.5]");
  if (config.height / config.n_parts < 2 * PartRadius(config) + 1 ||
      config.width < 2 * PartRadius(config) + 1) {
    invalid("parts cannot be placed without overlap at this image size");
  }
}

std::size_t NumConcepts(const GeneratorConfig& config) {
  return config.n_parts * (1 + config.n_colors);
}

std::size_t PresenceConcept(std::size_t part) { return part; }

std::size_t ColorConcept(const GeneratorConfig& config, std::size_t part, std::size_t color) {
  return config.n_parts + part * config.n_colors + color;
}

std::size_t ConceptPart(const GeneratorConfig& config, std::size_t concept_index) {
  if (concept_index < config.n_parts) return concept_index;
  return (concept_index - config.n_parts) / config.n_colors;
}

std::vector<std::string> PartNames(const GeneratorConfig& config) {
  return {kPartNames.begin(), kPartNames.begin() + config.n_parts};
}

std::vector<std::string> ColorNames(const GeneratorConfig& config) {
  return {kColorNames.begin(), kColorNames.begin() + config.n_colors};
}

std::vector<std::string> ConceptNames(const GeneratorConfig& config) {
  std::vector<std::string> names(NumConcepts(config));
  for (std::size_t p = 0; p < config.n_parts; ++p) {
    names[PresenceConcept(p)] = std::string("has_") + kPartNames[p] + "::visible";
    for (std::size_t c = 0; c < config.n_colors; ++c) {
      names[ColorConcept(config, p, c)] =
          std::string("has_") + kPartNames[p] + "_color::" + kColorNames[c];
    }
  }
  return names;
}

std::vector<std::string> ClassNames(const GeneratorConfig& config, const ClassRule& rule) {
  std::vector<std::string> names(config.n_classes, "plain");
  for (const ClassRuleEntry& e : rule.entries) {
    const std::size_t part = ConceptPart(config, e.concept_index);
    if (e.concept_index < config.n_parts) {
      names[e.class_label] = std::string(kPartNames[part]) + "_visible";
    } else {
      const std::size_t color = (e.concept_index - config.n_parts) % config.n_colors;
      names[e.class_label] = std::string(kPartNames[part]) + "_" + kColorNames[color];
    }
  }
  return names;
}

ClassRule MakeClassRule(const GeneratorConfig& config) {
  const std::vector<std::size_t> literals = RuleLiterals(config);
  ClassRule rule;
  for (std::size_t label = 1; label < config.n_classes; ++label) {
    rule.entries.push_back({literals[label - 1], label});
  }
  return rule;
}

std::size_t ApplyClassRule(const ClassRule& rule, const std::vector<bool>& concepts) {
  for (const ClassRuleEntry& e : rule.entries) {
    if (e.concept_index < concepts.size() && concepts[e.concept_index]) return e.class_label;
  }
  return rule.default_class;
}

std::array<double, 3> PaletteColor(std::size_t color) { return kPalette.at(color); }

std::size_t PartRadius(const GeneratorConfig& config) {
  return std::max<std::size_t>(2, std::min(config.height, config.width) / 10);
}

PartBand PartRows(const GeneratorConfig& config, std::size_t part) {
  const std::size_t rows = config.height / config.n_parts;
  return {part * rows, (part + 1) * rows};
}

bool PartCovers(std::size_t part, int dx, int dy, int radius) {
  const int adx = std::abs(dx), ady = std::abs(dy);
  if (adx > radius || ady > radius) return false;
  switch (part) {
    case 0: return dx * dx + dy * dy <= radius * radius;          // circle
    case 1: return true;                                          // square
    case 2: return 2 * adx <= dy + radius;                        // triangle, apex up
    case 3: return adx + ady <= radius;                           // diamond
    case 4: return 3 * adx <= radius || 3 * ady <= radius;        // cross
    default: return 2 * (adx + ady) <= 3 * radius;                // octagon
  }
}

Dataset GenerateDataset(const GeneratorConfig& config) {
  ValidateConfig(config);
  Rng rng(config.seed);
  Dataset ds;
  ds.config = config;
  ds.part_names = PartNames(config);
  ds.color_names = ColorNames(config);
  ds.concept_names = ConceptNames(config);
  ds.rule = MakeClassRule(config);
  ds.class_names = ClassNames(config, ds.rule);

  const int radius = static_cast<int>(PartRadius(config));
  const int width = static_cast<int>(config.width);
  std::vector<SyntheticSample> samples(config.samples);
  for (SyntheticSample& sample : samples) {
    std::vector<bool> present(config.n_parts);
    std::vector<std::size_t> colors(config.n_parts);
    for (std::size_t p = 0; p < config.n_parts; ++p) present[p] = rng.Uniform() < kPresenceProbability;
    for (std::size_t p = 0; p < config.n_parts; ++p) colors[p] = rng.Index(config.n_colors);

    sample.keypoints.resize(config.n_parts);
    for (std::size_t p = 0; p < config.n_parts; ++p) {
      PartKeypoint& kp = sample.keypoints[p];
      kp.part_id = static_cast<int>(p);
      if (!present[p]) continue;
      const PartBand band = PartRows(config, p);
      const int x = radius + static_cast<int>(rng.Index(width - 2 * radius));
      const int y = static_cast<int>(band.first) + radius +
                    static_cast<int>(rng.Index(band.last - band.first - 2 * radius));
      kp = {static_cast<int>(p), x, y, true};
    }

    sample.image = Tensor({3, config.height, config.width});
    for (double& v : sample.image.values()) {
      v = std::clamp(kBackground + config.noise * (2.0 * rng.Uniform() - 1.0), 0.0, 1.0);
    }
    for (std::size_t p = 0; p < config.n_parts; ++p) {
      const PartKeypoint& kp = sample.keypoints[p];
      if (!kp.visible) continue;
      const std::array<double, 3> rgb = PaletteColor(colors[p]);
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          if (!PartCovers(p, dx, dy, radius)) continue;
          for (std::size_t c = 0; c < 3; ++c) {
            sample.image.at(c, static_cast<std::size_t>(kp.y + dy),
                            static_cast<std::size_t>(kp.x + dx)) = rgb[c];
          }
        }
      }
    }

    sample.concepts.assign(NumConcepts(config), false);
    for (std::size_t p = 0; p < config.n_parts; ++p) {
      if (!present[p]) continue;
      sample.concepts[PresenceConcept(p)] = true;
      sample.concepts[ColorConcept(config, p, colors[p])] = true;
    }
    sample.class_label = ApplyClassRule(ds.rule, sample.concepts);
  }

  std::vector<std::size_t> order(config.samples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.Shuffle(order);
  const std::size_t n_train = config.samples * 4 / 5;
  std::vector<bool> in_train(config.samples, false);
  for (std::size_t i = 0; i < n_train; ++i) in_train[order[i]] = true;
  for (std::size_t i = 0; i < config.samples; ++i) {
    (in_train[i] ? ds.train : ds.test).push_back(std::move(samples[i]));
  }
  return ds;
}

std::map<std::size_t, std::size_t> DefaultConceptToPart(const GeneratorConfig& config) {
  std::map<std::size_t, std::size_t> mapping;
  for (std::size_t k = 0; k < NumConcepts(config); ++k) mapping[k] = ConceptPart(config, k);
  return mapping;
}

cbm::TrainingSet ToTrainingSet(std::span<const SyntheticSample> samples) {
  cbm::TrainingSet set;
  for (const SyntheticSample& s : samples) {
    set.images.push_back(s.image);
    set.concepts.emplace_back(s.concepts.begin(), s.concepts.end());
    set.labels.push_back(s.class_label);
  }
  return set;
}

}  // namespace cbmx::synth
