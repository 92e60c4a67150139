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

#include <gtest/gtest.h>

#include <set>

#include "cbmx/error.hpp"
#include "cbmx/synthetic.hpp"

namespace cbmx::synth {
namespace {

GeneratorConfig SmallConfig(std::uint64_t seed) {
  GeneratorConfig config;
  config.height = config.width = 32;
  config.samples = 60;
  config.seed = seed;
  return config;
}

ErrorCode CodeOf(const GeneratorConfig& config) {
  try {
    GenerateDataset(config);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::kIo;
}

std::vector<SyntheticSample> AllSamples(const Dataset& ds) {
  std::vector<SyntheticSample> all = ds.train;
  all.insert(all.end(), ds.test.begin(), ds.test.end());
  return all;
}

bool IsPaletteColor(const Tensor& image, std::size_t row, std::size_t col, std::size_t color) {
  const std::array<double, 3> rgb = PaletteColor(color);
  for (std::size_t c = 0; c < 3; ++c) {
    if (image.at(c, row, col) != rgb[c]) return false;
  }
  return true;
}

TEST(GenerateTest, SameSeedIsBitwiseIdentical) {
  EXPECT_EQ(GenerateDataset(SmallConfig(3)), GenerateDataset(SmallConfig(3)));
  EXPECT_NE(GenerateDataset(SmallConfig(3)), GenerateDataset(SmallConfig(4)));
}

TEST(GenerateTest, SplitIsEightyTwenty) {
  const Dataset ds = GenerateDataset(SmallConfig(1));
  EXPECT_EQ(ds.train.size(), 48u);
  EXPECT_EQ(ds.test.size(), 12u);
}

TEST(GenerateTest, AbsentPartsHaveNoKeypointOrColour) {
  const GeneratorConfig config = SmallConfig(2);
  const Dataset ds = GenerateDataset(config);
  std::size_t absent = 0;
  for (const SyntheticSample& s : AllSamples(ds)) {
    for (std::size_t p = 0; p < config.n_parts; ++p) {
      EXPECT_EQ(s.keypoints[p].part_id, static_cast<int>(p));
      if (s.concepts[PresenceConcept(p)]) {
        EXPECT_TRUE(s.keypoints[p].visible);
        continue;
      }
      ++absent;
      EXPECT_FALSE(s.keypoints[p].visible);
      for (std::size_t c = 0; c < config.n_colors; ++c) {
        EXPECT_FALSE(s.concepts[ColorConcept(config, p, c)]);
      }
    }
  }
  EXPECT_GT(absent, 0u);
}

TEST(GenerateTest, ConceptsMatchRenderedPixels) {
  const GeneratorConfig config = SmallConfig(5);
  const Dataset ds = GenerateDataset(config);
  const int radius = static_cast<int>(PartRadius(config));
  for (const SyntheticSample& s : AllSamples(ds)) {
    for (std::size_t p = 0; p < config.n_parts; ++p) {
      const PartBand band = PartRows(config, p);
      for (std::size_t color = 0; color < config.n_colors; ++color) {
        std::size_t painted = 0, covered = 0;
        for (std::size_t r = band.first; r < band.last; ++r) {
          for (std::size_t c = 0; c < config.width; ++c) {
            painted += IsPaletteColor(s.image, r, c, color);
          }
        }
        if (s.concepts[ColorConcept(config, p, color)]) {
          for (int dy = -radius; dy <= radius; ++dy) {
            for (int dx = -radius; dx <= radius; ++dx) covered += PartCovers(p, dx, dy, radius);
          }
          EXPECT_TRUE(IsPaletteColor(s.image, s.keypoints[p].y, s.keypoints[p].x, color));
        }
        EXPECT_EQ(painted, covered) << "part " << p << " colour " << color;
      }
    }
  }
}

TEST(GenerateTest, PixelsInRangeAndKeypointsInBounds) {
  GeneratorConfig config = SmallConfig(6);
  config.noise = 0.5;
  const Dataset ds = GenerateDataset(config);
  for (const SyntheticSample& s : AllSamples(ds)) {
    EXPECT_EQ(s.image.shape(), (Shape{3, 32, 32}));
    for (double v : s.image.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    for (const PartKeypoint& kp : s.keypoints) {
      if (!kp.visible) continue;
      EXPECT_GE(kp.x, 0);
      EXPECT_LT(kp.x, 32);
      EXPECT_GE(kp.y, 0);
      EXPECT_LT(kp.y, 32);
    }
  }
}

TEST(GenerateTest, PositionsVaryAcrossSamples) {
  const Dataset ds = GenerateDataset(SmallConfig(8));
  std::set<std::pair<int, int>> heads;
  for (const SyntheticSample& s : AllSamples(ds)) {
    if (s.keypoints[0].visible) heads.insert({s.keypoints[0].x, s.keypoints[0].y});
  }
  EXPECT_GT(heads.size(), 10u);
}

TEST(ClassRuleTest, StoredLabelsMatchTheRule) {
  const Dataset ds = GenerateDataset(SmallConfig(9));
  std::set<std::size_t> seen;
  for (const SyntheticSample& s : AllSamples(ds)) {
    EXPECT_EQ(ApplyClassRule(ds.rule, s.concepts), s.class_label);
    seen.insert(s.class_label);
  }
  EXPECT_GT(seen.size(), 3u);
}

TEST(ClassRuleTest, AllFalseGivesDefaultClass) {
  const GeneratorConfig config = SmallConfig(0);
  const ClassRule rule = MakeClassRule(config);
  EXPECT_EQ(ApplyClassRule(rule, std::vector<bool>(NumConcepts(config), false)), 0u);
}

TEST(ClassRuleTest, ConceptsOutsideTheTableAreIgnored) {
  const GeneratorConfig config = SmallConfig(0);
  const ClassRule rule = MakeClassRule(config);
  std::set<std::size_t> used;
  for (const ClassRuleEntry& e : rule.entries) used.insert(e.concept_index);
  std::vector<bool> a(NumConcepts(config), false);
  a[ColorConcept(config, 1, 2)] = true;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (used.count(k)) continue;
    std::vector<bool> b = a;
    b[k] = !b[k];
    EXPECT_EQ(ApplyClassRule(rule, a), ApplyClassRule(rule, b)) << k;
  }
  EXPECT_LT(used.size(), a.size());
}

TEST(ClassRuleTest, DecisionListOrderWins) {
  const GeneratorConfig config = SmallConfig(0);
  const ClassRule rule = MakeClassRule(config);
  std::vector<bool> c(NumConcepts(config), false);
  c[PresenceConcept(2)] = true;
  const std::size_t tail_only = ApplyClassRule(rule, c);
  c[ColorConcept(config, 0, 0)] = true;
  EXPECT_EQ(ApplyClassRule(rule, c), rule.entries.front().class_label);
  EXPECT_NE(tail_only, rule.entries.front().class_label);
}

TEST(ConfigTest, InvalidConfigurationsAreRejected) {
  GeneratorConfig c = SmallConfig(0);
  c.height = 8;
  EXPECT_EQ(CodeOf(c), ErrorCode::kConfigInvalid);
  c = SmallConfig(0);
  c.n_classes = 50;
  EXPECT_EQ(CodeOf(c), ErrorCode::kConfigInvalid);
  c = SmallConfig(0);
  c.n_parts = 6;
  c.height = 16;
  EXPECT_EQ(CodeOf(c), ErrorCode::kConfigInvalid);
  c = SmallConfig(0);
  c.samples = 2;
  EXPECT_EQ(CodeOf(c), ErrorCode::kConfigInvalid);
  c = SmallConfig(0);
  c.noise = -0.1;
  EXPECT_EQ(CodeOf(c), ErrorCode::kConfigInvalid);
}

TEST(NamingTest, ConceptNamesAndParts) {
  const GeneratorConfig config = SmallConfig(0);
  const std::vector<std::string> names = ConceptNames(config);
  ASSERT_EQ(names.size(), 12u);
  EXPECT_EQ(names[0], "has_head::visible");
  EXPECT_EQ(names[ColorConcept(config, 1, 2)], "has_body_color::blue");
  EXPECT_EQ(ConceptPart(config, ColorConcept(config, 2, 0)), 2u);
  const auto mapping = DefaultConceptToPart(config);
  EXPECT_EQ(mapping.size(), 12u);
  EXPECT_EQ(mapping.at(1), 1u);
}

}  // namespace
}  // namespace cbmx::synth
