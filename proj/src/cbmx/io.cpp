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

#include "cbmx/io.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <utility>

#include "cbmx/error.hpp"
#include "cbmx/image.hpp"
#include "json.hpp"

namespace cbmx::io {
namespace {

using Json = nlohmann::ordered_json;

void AppendDouble(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

double ReadDouble(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return std::bit_cast<double>(bits);
}

class BlobWriter {
 public:
  Json Add(const Tensor& t) {
    Json desc;
    desc["shape"] = t.shape();
    desc["offset"] = bytes_.size();
    desc["count"] = t.size();
    for (double v : t.values()) AppendDouble(bytes_, v);
    return desc;
  }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class BlobReader {
 public:
  explicit BlobReader(std::string_view blob) : blob_(blob) {}

  Tensor Read(const Json& desc) {
    const Shape shape = desc.at("shape").get<Shape>();
    const auto offset = desc.at("offset").get<std::uint64_t>();
    const auto count = desc.at("count").get<std::uint64_t>();
    if (count != ShapeSize(shape)) {
      throw Error(ErrorCode::kShapeMismatch, "parameter count " + std::to_string(count) +
                                                 " does not match shape " + ShapeToString(shape));
    }
    if (offset % 8 != 0 || offset > blob_.size() || count > (blob_.size() - offset) / 8) {
      throw Error(ErrorCode::kCorruptOffsets, "range at offset " + std::to_string(offset) +
                                                  " exceeds the blob");
    }
    if (count > 0) ranges_.emplace_back(offset, offset + count * 8);
    std::vector<double> data(count);
    for (std::size_t i = 0; i < count; ++i) data[i] = ReadDouble(blob_.data() + offset + 8 * i);
    return Tensor(shape, std::move(data));
  }

  void CheckNoOverlap() {
    std::sort(ranges_.begin(), ranges_.end());
    for (std::size_t i = 1; i < ranges_.size(); ++i) {
      if (ranges_[i].first < ranges_[i - 1].second) {
        throw Error(ErrorCode::kCorruptOffsets, "overlapping blob ranges");
      }
    }
  }

 private:
  std::string_view blob_;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges_;
};

std::string Pack(std::string_view kind, const Json& manifest, const std::string& blob) {
  const std::string text = manifest.dump(1);
  std::string out = std::string(kMagic) + " " + std::string(kind) + " " +
                    std::to_string(text.size()) + "\n";
  out += text;
  out += blob;
  return out;
}

struct Unpacked {
  Json manifest;
  std::string_view blob;
};

Unpacked Unpack(std::string_view bytes, std::string_view kind) {
  const std::string prefix = std::string(kMagic) + " " + std::string(kind) + " ";
  if (bytes.substr(0, prefix.size()) != prefix) {
    throw Error(ErrorCode::kBadMagic, "not a " + std::string(kMagic) + " " + std::string(kind) +
                                          " file");
  }
  const std::size_t eol = bytes.find('\n', prefix.size());
  if (eol == std::string_view::npos || eol == prefix.size() || eol - prefix.size() > 19) {
    throw Error(ErrorCode::kCorruptOffsets, "malformed container header");
  }
  std::uint64_t manifest_bytes = 0;
  for (char ch : bytes.substr(prefix.size(), eol - prefix.size())) {
    if (ch < '0' || ch > '9') throw Error(ErrorCode::kCorruptOffsets, "malformed manifest length");
    manifest_bytes = manifest_bytes * 10 + static_cast<std::uint64_t>(ch - '0');
  }
  if (manifest_bytes > bytes.size() - eol - 1) {
    throw Error(ErrorCode::kCorruptOffsets, "manifest extends past end of file");
  }
  Unpacked out;
  try {
    out.manifest = Json::parse(bytes.substr(eol + 1, manifest_bytes));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kCorruptOffsets, std::string("malformed manifest: ") + e.what());
  }
  out.blob = bytes.substr(eol + 1 + manifest_bytes);
  std::uint64_t declared = 0;
  try {
    declared = out.manifest.at("blob_bytes").get<std::uint64_t>();
  } catch (const Json::exception&) {
    throw Error(ErrorCode::kCorruptOffsets, "manifest lacks blob_bytes");
  }
  if (declared != out.blob.size()) {
    throw Error(ErrorCode::kCorruptOffsets, "blob holds " + std::to_string(out.blob.size()) +
                                                " bytes, manifest declares " +
                                                std::to_string(declared));
  }
  return out;
}

Json WindowJson(nn::Window w) { return Json::array({w.h, w.w}); }
nn::Window WindowFrom(const Json& j) { return {j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>()}; }

Json NetworkJson(const nn::Network& network, BlobWriter& blob) {
  Json layers = Json::array();
  for (const nn::Layer& layer : network.layers) {
    Json j;
    j["type"] = nn::LayerKindName(layer);
    if (const auto* conv = std::get_if<nn::Conv2D>(&layer)) {
      j["stride"] = WindowJson(conv->stride);
      j["padding"] = WindowJson(conv->padding);
      j["weights"] = blob.Add(conv->weights);
      j["bias"] = blob.Add(conv->bias);
    } else if (const auto* lin = std::get_if<nn::Linear>(&layer)) {
      j["weights"] = blob.Add(lin->weights);
      j["bias"] = blob.Add(lin->bias);
    } else if (const auto* pool = std::get_if<nn::MaxPool2D>(&layer)) {
      j["kernel"] = WindowJson(pool->kernel);
      j["stride"] = WindowJson(pool->stride);
    } else if (const auto* bn = std::get_if<nn::BatchNorm2D>(&layer)) {
      j["eps"] = bn->eps;
      j["gamma"] = blob.Add(bn->gamma);
      j["beta"] = blob.Add(bn->beta);
      j["running_mean"] = blob.Add(bn->running_mean);
      j["running_var"] = blob.Add(bn->running_var);
    }
    layers.push_back(std::move(j));
  }
  Json out;
  out["input_shape"] = network.input_shape;
  out["layers"] = std::move(layers);
  return out;
}

nn::Network NetworkFrom(const Json& j, BlobReader& blob) {
  nn::Network network;
  network.input_shape = j.at("input_shape").get<Shape>();
  for (const Json& l : j.at("layers")) {
    const std::string type = l.at("type").get<std::string>();
    if (type == "conv2d") {
      network.layers.emplace_back(nn::Conv2D{blob.Read(l.at("weights")), blob.Read(l.at("bias")),
                                             WindowFrom(l.at("stride")),
                                             WindowFrom(l.at("padding"))});
    } else if (type == "linear") {
      network.layers.emplace_back(nn::Linear{blob.Read(l.at("weights")), blob.Read(l.at("bias"))});
    } else if (type == "relu") {
      network.layers.emplace_back(nn::ReLU{});
    } else if (type == "sigmoid") {
      network.layers.emplace_back(nn::Sigmoid{});
    } else if (type == "softmax") {
      network.layers.emplace_back(nn::Softmax{});
    } else if (type == "maxpool2d") {
      network.layers.emplace_back(nn::MaxPool2D{WindowFrom(l.at("kernel")), WindowFrom(l.at("stride"))});
    } else if (type == "batchnorm2d") {
      nn::BatchNorm2D bn;
      bn.gamma = blob.Read(l.at("gamma"));
      bn.beta = blob.Read(l.at("beta"));
      bn.running_mean = blob.Read(l.at("running_mean"));
      bn.running_var = blob.Read(l.at("running_var"));
      bn.eps = l.at("eps").get<double>();
      network.layers.emplace_back(std::move(bn));
    } else if (type == "flatten") {
      network.layers.emplace_back(nn::Flatten{});
    } else {
      throw Error(ErrorCode::kCorruptOffsets, "unknown layer type '" + type + "'");
    }
  }
  return network;
}

template <class Fn>
auto GuardJson(Fn&& fn) {
  try {
    return fn();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kCorruptOffsets, std::string("malformed manifest: ") + e.what());
  }
}

Json SplitJson(const std::vector<synth::SyntheticSample>& samples, BlobWriter& blob) {
  Json records = Json::array();
  for (const synth::SyntheticSample& s : samples) {
    Json r;
    r["class"] = s.class_label;
    Json concepts = Json::array();
    for (bool c : s.concepts) concepts.push_back(c ? 1 : 0);
    r["concepts"] = std::move(concepts);
    Json keypoints = Json::array();
    for (const synth::PartKeypoint& kp : s.keypoints) {
      keypoints.push_back(Json::array({kp.part_id, kp.x, kp.y, kp.visible ? 1 : 0}));
    }
    r["keypoints"] = std::move(keypoints);
    r["image"] = blob.Add(s.image);
    records.push_back(std::move(r));
  }
  Json out;
  out["count"] = samples.size();
  out["records"] = std::move(records);
  return out;
}

std::vector<synth::SyntheticSample> SplitFrom(const Json& j, BlobReader& blob,
                                              const Shape& image_shape, std::size_t num_concepts) {
  const auto count = j.at("count").get<std::size_t>();
  const Json& records = j.at("records");
  if (records.size() != count) {
    throw Error(ErrorCode::kCorruptOffsets, "split declares " + std::to_string(count) +
                                                " samples but lists " +
                                                std::to_string(records.size()));
  }
  std::vector<synth::SyntheticSample> samples;
  samples.reserve(count);
  for (const Json& r : records) {
    synth::SyntheticSample s;
    s.class_label = r.at("class").get<std::size_t>();
    for (const Json& c : r.at("concepts")) s.concepts.push_back(c.get<int>() != 0);
    if (s.concepts.size() != num_concepts) {
      throw Error(ErrorCode::kShapeMismatch, "sample concept vector has wrong arity");
    }
    for (const Json& kp : r.at("keypoints")) {
      s.keypoints.push_back({kp.at(0).get<int>(), kp.at(1).get<int>(), kp.at(2).get<int>(),
                             kp.at(3).get<int>() != 0});
    }
    s.image = blob.Read(r.at("image"));
    if (s.image.shape() != image_shape) {
      throw Error(ErrorCode::kShapeMismatch, "sample image has shape " +
                                                 ShapeToString(s.image.shape()));
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

std::string CsvField(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

std::string SerializeModel(const cbm::CbmModel& model) {
  cbm::ValidateModel(model);
  BlobWriter blob;
  Json manifest;
  manifest["format_version"] = 1;
  manifest["sigmoid_between"] = model.sigmoid_between;
  manifest["concept_names"] = model.concept_names;
  manifest["class_names"] = model.class_names;
  manifest["g"] = NetworkJson(model.g, blob);
  manifest["f"] = NetworkJson(model.f, blob);
  manifest["blob_bytes"] = blob.bytes().size();
  return Pack("model", manifest, blob.bytes());
}

cbm::CbmModel DeserializeModel(std::string_view bytes) {
  const Unpacked u = Unpack(bytes, "model");
  BlobReader blob(u.blob);
  cbm::CbmModel model = GuardJson([&] {
    cbm::CbmModel m;
    m.sigmoid_between = u.manifest.at("sigmoid_between").get<bool>();
    m.concept_names = u.manifest.at("concept_names").get<std::vector<std::string>>();
    m.class_names = u.manifest.at("class_names").get<std::vector<std::string>>();
    m.g = NetworkFrom(u.manifest.at("g"), blob);
    m.f = NetworkFrom(u.manifest.at("f"), blob);
    return m;
  });
  blob.CheckNoOverlap();
  cbm::ValidateModel(model);
  return model;
}

void SaveModel(const cbm::CbmModel& model, const std::string& path) {
  WriteFile(path, SerializeModel(model));
}

cbm::CbmModel LoadModel(const std::string& path) { return DeserializeModel(ReadFile(path)); }

std::string SerializeDataset(const synth::Dataset& dataset) {
  if (dataset.train.empty() && dataset.test.empty()) {
    throw Error(ErrorCode::kEmpty, "refusing to save an empty dataset");
  }
  const synth::GeneratorConfig& c = dataset.config;
  BlobWriter blob;
  Json manifest;
  manifest["format_version"] = 1;
  manifest["config"] = {{"height", c.height},   {"width", c.width},
                        {"n_parts", c.n_parts}, {"n_colors", c.n_colors},
                        {"n_classes", c.n_classes}, {"samples", c.samples},
                        {"seed", c.seed},       {"noise", c.noise}};
  manifest["image_shape"] = Shape{3, c.height, c.width};
  manifest["part_names"] = dataset.part_names;
  manifest["color_names"] = dataset.color_names;
  manifest["concept_names"] = dataset.concept_names;
  manifest["class_names"] = dataset.class_names;
  Json entries = Json::array();
  for (const synth::ClassRuleEntry& e : dataset.rule.entries) {
    entries.push_back(Json::array({e.concept_index, e.class_label}));
  }
  manifest["class_rule"] = {{"entries", entries}, {"default_class", dataset.rule.default_class}};
  manifest["train"] = SplitJson(dataset.train, blob);
  manifest["test"] = SplitJson(dataset.test, blob);
  manifest["blob_bytes"] = blob.bytes().size();
  return Pack("dataset", manifest, blob.bytes());
}

synth::Dataset DeserializeDataset(std::string_view bytes) {
  const Unpacked u = Unpack(bytes, "dataset");
  BlobReader blob(u.blob);
  synth::Dataset ds = GuardJson([&] {
    synth::Dataset d;
    const Json& c = u.manifest.at("config");
    d.config.height = c.at("height").get<std::size_t>();
    d.config.width = c.at("width").get<std::size_t>();
    d.config.n_parts = c.at("n_parts").get<std::size_t>();
    d.config.n_colors = c.at("n_colors").get<std::size_t>();
    d.config.n_classes = c.at("n_classes").get<std::size_t>();
    d.config.samples = c.at("samples").get<std::size_t>();
    d.config.seed = c.at("seed").get<std::uint64_t>();
    d.config.noise = c.at("noise").get<double>();
    d.part_names = u.manifest.at("part_names").get<std::vector<std::string>>();
    d.color_names = u.manifest.at("color_names").get<std::vector<std::string>>();
    d.concept_names = u.manifest.at("concept_names").get<std::vector<std::string>>();
    d.class_names = u.manifest.at("class_names").get<std::vector<std::string>>();
    const Json& rule = u.manifest.at("class_rule");
    for (const Json& e : rule.at("entries")) {
      d.rule.entries.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>()});
    }
    d.rule.default_class = rule.at("default_class").get<std::size_t>();
    const Shape image_shape = u.manifest.at("image_shape").get<Shape>();
    if (image_shape != Shape{3, d.config.height, d.config.width}) {
      throw Error(ErrorCode::kShapeMismatch, "image_shape disagrees with the config echo");
    }
    d.train = SplitFrom(u.manifest.at("train"), blob, image_shape, d.concept_names.size());
    d.test = SplitFrom(u.manifest.at("test"), blob, image_shape, d.concept_names.size());
    return d;
  });
  blob.CheckNoOverlap();
  if (ds.train.empty() && ds.test.empty()) throw Error(ErrorCode::kEmpty, "dataset has no samples");
  if (ds.train.size() + ds.test.size() != ds.config.samples) {
    throw Error(ErrorCode::kCorruptOffsets, "record count differs from the declared sample count");
  }
  return ds;
}

void SaveDataset(const synth::Dataset& dataset, const std::string& dir) {
  const std::string bytes = SerializeDataset(dataset);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create directory " + dir + ": " + ec.message());
  WriteFile((std::filesystem::path(dir) / kDatasetFileName).string(), bytes);
}

synth::Dataset LoadDataset(const std::string& dir) {
  return DeserializeDataset(ReadFile((std::filesystem::path(dir) / kDatasetFileName).string()));
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string FormatNumber(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", value);
  return buf;
}

std::string PointingCsv(const std::vector<evalkit::PointingResult>& results) {
  if (results.empty()) throw Error(ErrorCode::kEmpty, "no pointing results to export");
  std::string out = "method,part_id,n_samples,n_skipped,mean_distance,shortest10_mean\n";
  for (const evalkit::PointingResult& r : results) {
    for (const evalkit::PartPointing& p : r.parts) {
      out += CsvField(r.method) + "," + std::to_string(p.part_id) + "," +
             std::to_string(p.n_samples) + "," + std::to_string(p.n_skipped) + "," +
             FormatNumber(p.mean_distance) + "," + FormatNumber(p.shortest10_mean) + "\n";
    }
  }
  return out;
}

std::string ContributionCsv(const evalkit::ContributionReport& report) {
  if (report.rows.empty()) throw Error(ErrorCode::kEmpty, "no contribution rows to export");
  std::string out = "concept_id,concept_name,concept_value,relevancy,contribution_percent\n";
  for (const evalkit::ContributionRow& row : report.rows) {
    out += std::to_string(row.concept_id) + "," + CsvField(row.concept_name) + "," +
           FormatNumber(row.concept_value) + "," + FormatNumber(row.relevance) + "," +
           FormatNumber(row.contribution_percent) + "\n";
  }
  return out;
}

std::string HistoryCsv(const cbm::History& history) {
  if (history.empty()) throw Error(ErrorCode::kEmpty, "no training history to export");
  auto optional = [](double v) { return v < 0.0 ? std::string() : FormatNumber(v); };
  std::string out = "phase,epoch,loss,concept_accuracy,class_accuracy\n";
  for (const cbm::HistoryEntry& e : history) {
    out += e.phase + "," + std::to_string(e.epoch) + "," + FormatNumber(e.loss) + "," +
           optional(e.concept_accuracy) + "," + optional(e.class_accuracy) + "\n";
  }
  return out;
}

std::string InterventionCsv(const cbm::InterventionResult& result,
                            const std::vector<std::string>& class_names) {
  if (result.new_probs.empty()) throw Error(ErrorCode::kEmpty, "no intervention to export");
  std::string out = "class_id,class_name,old_prob,new_prob,delta\n";
  for (std::size_t c = 0; c < result.new_probs.size(); ++c) {
    out += std::to_string(c) + "," + CsvField(c < class_names.size() ? class_names[c] : "") + "," +
           FormatNumber(result.old_probs[c]) + "," + FormatNumber(result.new_probs[c]) + "," +
           FormatNumber(result.delta[c]) + "\n";
  }
  return out;
}

void ExportCsv(const std::string& csv, const std::string& path) { WriteFile(path, csv); }

}  // namespace cbmx::io
