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

#ifndef CBMX_IO_HPP_
#define CBMX_IO_HPP_

// Container layout shared by model and dataset files:
//
//   "CBX1 <kind> <manifest_bytes>\n"
//   <manifest: JSON text, manifest_bytes long>
//   <blob: little-endian IEEE-754 doubles>
//
// Manifest offsets are byte offsets into the blob.

#include <string>
#include <string_view>
#include <vector>

#include "cbmx/cbm.hpp"
#include "cbmx/evalkit.hpp"
#include "cbmx/synthetic.hpp"

namespace cbmx::io {

inline constexpr std::string_view kMagic = "CBX1";
inline constexpr const char* kDatasetFileName = "dataset.cbx";

std::string SerializeModel(const cbm::CbmModel& model);
cbm::CbmModel DeserializeModel(std::string_view bytes);
void SaveModel(const cbm::CbmModel& model, const std::string& path);
cbm::CbmModel LoadModel(const std::string& path);

std::string SerializeDataset(const synth::Dataset& dataset);
synth::Dataset DeserializeDataset(std::string_view bytes);
// The dataset lives in <dir>/dataset.cbx; the directory is created if needed.
void SaveDataset(const synth::Dataset& dataset, const std::string& dir);
synth::Dataset LoadDataset(const std::string& dir);

std::string ReadFile(const std::string& path);

// Six significant digits, "%.6g".
std::string FormatNumber(double value);

std::string PointingCsv(const std::vector<evalkit::PointingResult>& results);
std::string ContributionCsv(const evalkit::ContributionReport& report);
std::string HistoryCsv(const cbm::History& history);
std::string InterventionCsv(const cbm::InterventionResult& result,
                            const std::vector<std::string>& class_names);

void ExportCsv(const std::string& csv, const std::string& path);

}  // namespace cbmx::io

#endif  // CBMX_IO_HPP_
