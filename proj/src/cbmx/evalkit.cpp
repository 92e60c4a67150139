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

#include "cbmx/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "cbmx/error.hpp"
#include "cbmx/lrp.hpp"

namespace cbmx::evalkit {

GridPoint MostSalientPoint(const Tensor& grid) {
  if (grid.empty()) throw Error(ErrorCode::kEmpty, "EmptyGrid");
  if (grid.rank() != 2) {
    throw Error(ErrorCode::kShapeMismatch, "saliency grid must be 2D, got " +
                                               ShapeToString(grid.shape()));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (grid[i] > grid[best]) best = i;
  }
  return {best / grid.dim(1), best % grid.dim(1)};
}

double PointingDistance(const Tensor& grid, const PartKeypoint& keypoint) {
  if (!keypoint.visible) {
    throw Error(ErrorCode::kNotVisible, "part " + std::to_string(keypoint.part_id));
  }
  const GridPoint peak = MostSalientPoint(grid);
  if (keypoint.x < 0 || keypoint.y < 0 || static_cast<std::size_t>(keypoint.y) >= grid.dim(0) ||
      static_cast<std::size_t>(keypoint.x) >= grid.dim(1)) {
    throw Error(ErrorCode::kOutOfBounds, "keypoint (" + std::to_string(keypoint.x) + "," +
                                             std::to_string(keypoint.y) + ") outside the grid");
  }
  const double dr = static_cast<double>(peak.row) - keypoint.y;
  const double dc = static_cast<double>(peak.col) - keypoint.x;
  return std::sqrt(dr * dr + dc * dc);
}

double ShortestFractionMean(std::span<const double> distances, double fraction) {
  if (distances.empty()) throw Error(ErrorCode::kEmpty, "no distances");
  if (!(fraction > 0.0) || fraction > 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "fraction must be in (0, 1]");
  }
  std::vector<double> sorted(distances.begin(), distances.end());
  std::sort(sorted.begin(), sorted.end());
  const auto count = std::min<std::size_t>(
      sorted.size(),
      static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(sorted.size()))));
  double total = 0.0;
  for (std::size_t i = 0; i < count; ++i) total += sorted[i];
  return total / static_cast<double>(count);
}

PointingResult DistancePointingGame(std::span<const synth::SyntheticSample> samples,
                                    const cbm::CbmModel& model,
                                    const attribution::AttributionConfig& config,
                                    const std::map<std::size_t, std::size_t>& concept_to_part) {
  attribution::ValidateConfig(config, model.g.input_shape);
  for (const auto& [concept_index, part] : concept_to_part) {
    if (concept_index >= model.num_concepts()) {
      throw Error(ErrorCode::kIndexOutOfRange, "concept " + std::to_string(concept_index));
    }
  }
  const nn::Network g = nn::IsCanonized(model.g) ? model.g : nn::FoldBatchNorm(model.g);
  std::map<std::size_t, std::vector<double>> distances;
  std::map<std::size_t, std::size_t> skipped;
  for (const auto& [concept_index, part] : concept_to_part) {
    distances[part];
    skipped[part];
  }
  for (const synth::SyntheticSample& sample : samples) {
    for (const auto& [concept_index, part] : concept_to_part) {
      if (part >= sample.keypoints.size()) {
        throw Error(ErrorCode::kIndexOutOfRange, "part " + std::to_string(part) +
                                                     " has no keypoint in the dataset");
      }
      const PartKeypoint& kp = sample.keypoints[part];
      if (!kp.visible) {
        ++skipped[part];
        continue;
      }
      const attribution::AttributionMap map =
          attribution::Compute(config, g, sample.image, concept_index);
      distances[part].push_back(PointingDistance(attribution::ChannelReduce(map.values), kp));
    }
  }
  PointingResult result{attribution::MethodLabel(config.method), {}};
  for (const auto& [part, d] : distances) {
    PartPointing row{part, d.size(), skipped[part], 0.0, 0.0};
    if (!d.empty()) {
      double total = 0.0;
      for (double v : d) total += v;
      row.mean_distance = total / static_cast<double>(d.size());
      row.shortest10_mean = ShortestFractionMean(d, kShortestFraction);
    }
    result.parts.push_back(row);
  }
  return result;
}

Contributions ConceptContributions(std::span<const double> relevance) {
  Contributions out{std::vector<double>(relevance.size(), 0.0), false};
  double total = 0.0;
  for (double r : relevance) total += std::abs(r);
  if (total == 0.0) {
    out.all_zero = true;
    return out;
  }
  for (std::size_t i = 0; i < relevance.size(); ++i) {
    out.percent[i] = 100.0 * std::abs(relevance[i]) / total;
  }
  return out;
}

Tensor ClassRelevance(const cbm::CbmModel& model, const Tensor& bottleneck,
                      std::size_t target_class) {
  if (target_class >= model.num_classes()) {
    throw Error(ErrorCode::kIndexOutOfRange, "class " + std::to_string(target_class));
  }
  const nn::Network f = nn::IsCanonized(model.f) ? model.f : nn::FoldBatchNorm(model.f);
  return lrp::Attribute(f, bottleneck, target_class, lrp::UniformRuleMap(f, lrp::Zero{})).map;
}

ContributionReport BuildContributionReport(const cbm::CbmModel& model, const Tensor& bottleneck,
                                           std::size_t target_class) {
  const Tensor relevance = ClassRelevance(model, bottleneck, target_class);
  const Contributions contrib = ConceptContributions(relevance.values());
  ContributionReport report;
  report.target_class = target_class;
  report.all_zero = contrib.all_zero;
  for (std::size_t k = 0; k < relevance.size(); ++k) {
    report.rows.push_back({k, model.concept_names.at(k),
                           cbm::DisplayedConceptValue(model, bottleneck[k]), relevance[k],
                           contrib.percent[k]});
  }
  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [](const ContributionRow& a, const ContributionRow& b) {
                     if (a.contribution_percent != b.contribution_percent) {
                       return a.contribution_percent > b.contribution_percent;
                     }
                     return a.concept_id < b.concept_id;
                   });
  return report;
}

std::string FormatTopContributions(const ContributionReport& report, std::size_t n) {
  std::string out;
  char buf[64];
  for (std::size_t i = 0; i < std::min(n, report.rows.size()); ++i) {
    if (i) out += ", ";
    std::snprintf(buf, sizeof(buf), "%.2f%%", report.rows[i].contribution_percent);
    out += report.rows[i].concept_name + " at " + buf;
  }
  return out;
}

SignPattern SignPatternSummary(std::span<const double> relevance,
                               const std::vector<bool>& presence) {
  if (relevance.size() != presence.size()) {
    throw Error(ErrorCode::kLengthMismatch, "relevance and presence differ in length");
  }
  SignPattern s;
  for (std::size_t k = 0; k < relevance.size(); ++k) {
    const double r = relevance[k];
    if (std::abs(r) < kZeroRelevance) {
      ++s.zero;
    } else if (presence[k]) {
      ++(r > 0.0 ? s.present_pos : s.present_neg);
    } else {
      ++(r > 0.0 ? s.absent_pos : s.absent_neg);
    }
  }
  return s;
}

}  // namespace cbmx::evalkit
