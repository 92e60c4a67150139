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

#ifndef CBMX_EVALKIT_HPP_
#define CBMX_EVALKIT_HPP_

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cbmx/attribution.hpp"
#include "cbmx/cbm.hpp"
#include "cbmx/synthetic.hpp"
#include "cbmx/tensor.hpp"

namespace cbmx::evalkit {

using synth::PartKeypoint;

struct GridPoint {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const GridPoint&, const GridPoint&) = default;
};

// Argmax of a 2D grid; the lowest row-major index wins ties.
GridPoint MostSalientPoint(const Tensor& grid);

// Euclidean pixel distance from the grid's most salient point to the
// keypoint (row = y, col = x).
double PointingDistance(const Tensor& grid, const PartKeypoint& keypoint);

// Mean of the ceil(fraction * N) smallest distances.
double ShortestFractionMean(std::span<const double> distances, double fraction);

struct PartPointing {
  std::size_t part_id = 0;
  std::size_t n_samples = 0;   // (sample, concept) pairs measured
  std::size_t n_skipped = 0;   // pairs skipped because the part was not visible
  double mean_distance = 0.0;
  double shortest10_mean = 0.0;
};

struct PointingResult {
  std::string method;
  std::vector<PartPointing> parts;  // ascending part_id
};

inline constexpr double kShortestFraction = 0.1;

PointingResult DistancePointingGame(std::span<const synth::SyntheticSample> samples,
                                    const cbm::CbmModel& model,
                                    const attribution::AttributionConfig& config,
                                    const std::map<std::size_t, std::size_t>& concept_to_part);

struct Contributions {
  std::vector<double> percent;
  bool all_zero = false;
};

// 100 |R_i| / sum_j |R_j|.
Contributions ConceptContributions(std::span<const double> relevance);

struct ContributionRow {
  std::size_t concept_id = 0;
  std::string concept_name;
  double concept_value = 0.0;
  double relevance = 0.0;
  double contribution_percent = 0.0;
};

struct ContributionReport {
  std::size_t target_class = 0;
  std::vector<ContributionRow> rows;  // descending contribution, then concept id
  bool all_zero = false;
};

// LRP-0 relevance of the f input for target_class.
Tensor ClassRelevance(const cbm::CbmModel& model, const Tensor& bottleneck,
                      std::size_t target_class);

ContributionReport BuildContributionReport(const cbm::CbmModel& model, const Tensor& bottleneck,
                                           std::size_t target_class);

// "has_x at 6.04%, has_y at 5.83%, ..." for the first n rows.
std::string FormatTopContributions(const ContributionReport& report, std::size_t n);

struct SignPattern {
  std::size_t present_pos = 0;
  std::size_t present_neg = 0;
  std::size_t absent_pos = 0;
  std::size_t absent_neg = 0;
  std::size_t zero = 0;
  friend bool operator==(const SignPattern&, const SignPattern&) = default;
};

inline constexpr double kZeroRelevance = 1e-12;

SignPattern SignPatternSummary(std::span<const double> relevance,
                               const std::vector<bool>& presence);

}  // namespace cbmx::evalkit

#endif  // CBMX_EVALKIT_HPP_
