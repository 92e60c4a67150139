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

#include "cbmx/cbmx.h"

#include <algorithm>
#include <exception>
#include <map>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "cbmx/attribution.hpp"
#include "cbmx/cbm.hpp"
#include "cbmx/error.hpp"
#include "cbmx/evalkit.hpp"
#include "cbmx/io.hpp"
#include "cbmx/server.hpp"
#include "cbmx/synthetic.hpp"

struct cbmx_dataset {
  cbmx::synth::Dataset data;
};

struct cbmx_model {
  cbmx::cbm::CbmModel model;
  cbmx::cbm::History history;
};

struct cbmx_map {
  cbmx::Tensor values;
  cbmx_target_kind kind;
  std::vector<std::string> concept_names;
  std::vector<bool> presence;
};

namespace {

thread_local std::string last_error;

cbmx_status StatusOf(cbmx::ErrorCode code) {
  using cbmx::ErrorCode;
  switch (code) {
    case ErrorCode::kInvalidArgument: return CBMX_INVALID_ARGUMENT;
    case ErrorCode::kShapeMismatch: return CBMX_SHAPE_MISMATCH;
    case ErrorCode::kNonFiniteValue: return CBMX_NON_FINITE;
    case ErrorCode::kCannotFold: return CBMX_CANNOT_FOLD;
    case ErrorCode::kNotCanonized: return CBMX_NOT_CANONIZED;
    case ErrorCode::kIndexOutOfRange: return CBMX_INDEX_OUT_OF_RANGE;
    case ErrorCode::kLengthMismatch: return CBMX_LENGTH_MISMATCH;
    case ErrorCode::kEmpty: return CBMX_EMPTY;
    case ErrorCode::kConfigInvalid: return CBMX_CONFIG_INVALID;
    case ErrorCode::kNotVisible: return CBMX_NOT_VISIBLE;
    case ErrorCode::kOutOfBounds: return CBMX_OUT_OF_BOUNDS;
    case ErrorCode::kBadMagic: return CBMX_BAD_MAGIC;
    case ErrorCode::kCorruptOffsets: return CBMX_CORRUPT_OFFSETS;
    case ErrorCode::kIo: return CBMX_IO_ERROR;
  }
  return CBMX_INTERNAL_ERROR;
}

template <class F>
cbmx_status try_(F&& f) {
  try {
    f();
  } catch (const cbmx::Error& e) {
    last_error = e.what();
    return StatusOf(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return CBMX_INTERNAL_ERROR;
  } catch (const std::exception& e) {
    last_error = e.what();
    return CBMX_INTERNAL_ERROR;
  } catch (...) {
    last_error = "unknown exception";
    return CBMX_INTERNAL_ERROR;
  }
  last_error.clear();
  return CBMX_OK;
}

template <class T>
T& deref(T* p) {
  if (p == nullptr) throw cbmx::Error(cbmx::ErrorCode::kInvalidArgument, "null pointer argument");
  return *p;
}

const char* path_arg(const char* path) {
  if (path == nullptr || *path == '\0') {
    throw cbmx::Error(cbmx::ErrorCode::kInvalidArgument, "empty path");
  }
  return path;
}

const std::vector<cbmx::synth::SyntheticSample>& Split(const cbmx_dataset& ds, cbmx_split split) {
  switch (split) {
    case CBMX_SPLIT_TRAIN: return ds.data.train;
    case CBMX_SPLIT_TEST: return ds.data.test;
  }
  throw cbmx::Error(cbmx::ErrorCode::kInvalidArgument, "unknown split");
}

const cbmx::synth::SyntheticSample& SampleAt(const cbmx_dataset& ds, cbmx_split split,
                                             std::size_t index) {
  const auto& samples = Split(ds, split);
  if (index >= samples.size()) {
    throw cbmx::Error(cbmx::ErrorCode::kIndexOutOfRange,
                      "sample " + std::to_string(index) + " of " + std::to_string(samples.size()));
  }
  return samples[index];
}

void CheckFits(const cbmx::cbm::CbmModel& model, const cbmx_dataset& ds) {
  if (model.g.input_shape != cbmx::Shape{3, ds.data.config.height, ds.data.config.width} ||
      model.num_concepts() != ds.data.concept_names.size()) {
    throw cbmx::Error(cbmx::ErrorCode::kShapeMismatch, "model does not fit the dataset");
  }
}

cbmx::attribution::Method MethodOf(cbmx_method method, std::size_t ig_steps) {
  switch (method) {
    case CBMX_METHOD_LRP: return cbmx::attribution::LrpMethod{};
    case CBMX_METHOD_GRAD: return cbmx::attribution::GradientMethod{};
    case CBMX_METHOD_IG: return cbmx::attribution::IntegratedGradientsMethod{ig_steps, {}};
  }
  throw cbmx::Error(cbmx::ErrorCode::kInvalidArgument, "unknown attribution method");
}

}  // namespace

extern "C" {

const char* cbmx_status_name(cbmx_status status) {
  switch (status) {
    case CBMX_OK: return "Ok";
    case CBMX_INVALID_ARGUMENT: return "InvalidArgument";
    case CBMX_SHAPE_MISMATCH: return "ShapeMismatch";
    case CBMX_NON_FINITE: return "NonFiniteValue";
    case CBMX_CANNOT_FOLD: return "CannotFold";
    case CBMX_NOT_CANONIZED: return "NotCanonized";
    case CBMX_INDEX_OUT_OF_RANGE: return "IndexOutOfRange";
    case CBMX_LENGTH_MISMATCH: return "LengthMismatch";
    case CBMX_EMPTY: return "Empty";
    case CBMX_CONFIG_INVALID: return "ConfigInvalid";
    case CBMX_NOT_VISIBLE: return "NotVisible";
    case CBMX_OUT_OF_BOUNDS: return "OutOfBounds";
    case CBMX_BAD_MAGIC: return "BadMagic";
    case CBMX_CORRUPT_OFFSETS: return "CorruptOffsets";
    case CBMX_IO_ERROR: return "IoError";
    case CBMX_INTERNAL_ERROR: return "InternalError";
  }
  return "Unknown";
}

const char* cbmx_last_error(void) { return last_error.c_str(); }

void cbmx_gen_config_default(cbmx_gen_config* config) {
  if (config == nullptr) return;
  const cbmx::synth::GeneratorConfig d;
  *config = {d.height, d.width, d.n_parts, d.n_colors, d.n_classes, d.samples, d.seed, d.noise};
}

cbmx_status cbmx_dataset_generate(const cbmx_gen_config* config, cbmx_dataset** out) {
  return try_([&] {
    const cbmx_gen_config& c = deref(config);
    cbmx::synth::GeneratorConfig g;
    g.height = c.height;
    g.width = c.width;
    g.n_parts = c.parts;
    g.n_colors = c.colors;
    g.n_classes = c.classes;
    g.samples = c.samples;
    g.seed = c.seed;
    g.noise = c.noise;
    auto& slot = deref(out);
    slot = new cbmx_dataset{cbmx::synth::GenerateDataset(g)};
  });
}

cbmx_status cbmx_dataset_save(const cbmx_dataset* dataset, const char* dir) {
  return try_([&] { cbmx::io::SaveDataset(deref(dataset).data, path_arg(dir)); });
}

cbmx_status cbmx_dataset_load(const char* dir, cbmx_dataset** out) {
  return try_([&] {
    auto& slot = deref(out);
    slot = new cbmx_dataset{cbmx::io::LoadDataset(path_arg(dir))};
  });
}

void cbmx_dataset_free(cbmx_dataset* dataset) { delete dataset; }

cbmx_status cbmx_dataset_size(const cbmx_dataset* dataset, cbmx_split split, size_t* out) {
  return try_([&] { deref(out) = Split(deref(dataset), split).size(); });
}

cbmx_status cbmx_dataset_num_concepts(const cbmx_dataset* dataset, size_t* out) {
  return try_([&] { deref(out) = deref(dataset).data.concept_names.size(); });
}

cbmx_status cbmx_dataset_num_parts(const cbmx_dataset* dataset, size_t* out) {
  return try_([&] { deref(out) = deref(dataset).data.part_names.size(); });
}

cbmx_status cbmx_dataset_concept_part(const cbmx_dataset* dataset, size_t concept_index,
                                      size_t* part) {
  return try_([&] {
    const cbmx_dataset& ds = deref(dataset);
    if (concept_index >= ds.data.concept_names.size()) {
      throw cbmx::Error(cbmx::ErrorCode::kIndexOutOfRange,
                        "concept " + std::to_string(concept_index));
    }
    deref(part) = cbmx::synth::ConceptPart(ds.data.config, concept_index);
  });
}

void cbmx_train_config_default(cbmx_train_config* config) {
  if (config == nullptr) return;
  const cbmx::cbm::TrainConfig d;
  *config = {CBMX_REGIME_INDEPENDENT, 1,  d.lambda,   d.epochs, d.batch_size,
             d.learning_rate,         d.momentum, d.seed};
}

cbmx_status cbmx_model_train(const cbmx_dataset* dataset, const cbmx_train_config* config,
                             cbmx_model** out) {
  return try_([&] {
    const cbmx_dataset& ds = deref(dataset);
    const cbmx_train_config& c = deref(config);
    auto& slot = deref(out);
    cbmx::cbm::TrainConfig tc;
    switch (c.regime) {
      case CBMX_REGIME_INDEPENDENT: tc.regime = cbmx::cbm::Regime::kIndependent; break;
      case CBMX_REGIME_SEQUENTIAL: tc.regime = cbmx::cbm::Regime::kSequential; break;
      case CBMX_REGIME_JOINT: tc.regime = cbmx::cbm::Regime::kJoint; break;
      default: throw cbmx::Error(cbmx::ErrorCode::kInvalidArgument, "unknown regime");
    }
    tc.lambda = c.lambda;
    tc.epochs = c.epochs;
    tc.batch_size = c.batch_size;
    tc.learning_rate = c.learning_rate;
    tc.momentum = c.momentum;
    tc.seed = c.seed;
    cbmx::cbm::ValidateTrainConfig(tc);
    const cbmx::synth::GeneratorConfig& g = ds.data.config;
    cbmx::cbm::CbmModel model = cbmx::cbm::MakeDefaultModel(
        {3, g.height, g.width}, ds.data.concept_names, ds.data.class_names, c.sigmoid_between != 0,
        c.seed);
    cbmx::cbm::TrainResult result =
        cbmx::cbm::Train(std::move(model), cbmx::synth::ToTrainingSet(ds.data.train), tc);
    slot = new cbmx_model{std::move(result.model), std::move(result.history)};
  });
}

cbmx_status cbmx_model_save(const cbmx_model* model, const char* path) {
  return try_([&] { cbmx::io::SaveModel(deref(model).model, path_arg(path)); });
}

cbmx_status cbmx_model_load(const char* path, cbmx_model** out) {
  return try_([&] {
    auto& slot = deref(out);
    slot = new cbmx_model{cbmx::io::LoadModel(path_arg(path)), {}};
  });
}

void cbmx_model_free(cbmx_model* model) { delete model; }

cbmx_status cbmx_model_evaluate(const cbmx_model* model, const cbmx_dataset* dataset,
                                cbmx_split split, cbmx_metrics* out) {
  return try_([&] {
    const cbmx_model& m = deref(model);
    const cbmx_dataset& ds = deref(dataset);
    cbmx_metrics& metrics = deref(out);
    CheckFits(m.model, ds);
    const auto& samples = Split(ds, split);
    if (samples.empty()) throw cbmx::Error(cbmx::ErrorCode::kEmpty, "split has no samples");
    std::vector<cbmx::Tensor> values, logits;
    std::vector<std::vector<double>> concepts;
    std::vector<std::size_t> labels;
    for (const auto& s : samples) {
      cbmx::cbm::Prediction p = cbmx::cbm::Predict(m.model, s.image);
      values.push_back(std::move(p.concepts.values));
      logits.push_back(std::move(p.class_logits));
      concepts.emplace_back(s.concepts.begin(), s.concepts.end());
      labels.push_back(s.class_label);
    }
    metrics.concept_accuracy = cbmx::cbm::ConceptBinaryAccuracy(values, concepts);
    metrics.class_accuracy = cbmx::cbm::Top1Accuracy(logits, labels);
  });
}

cbmx_status cbmx_model_write_history_csv(const cbmx_model* model, const char* path) {
  return try_([&] { cbmx::io::ExportCsv(cbmx::io::HistoryCsv(deref(model).history), path_arg(path)); });
}

void cbmx_attr_config_default(cbmx_attr_config* config) {
  if (config == nullptr) return;
  const cbmx::attribution::SmoothGradOptions sg;
  *config = {CBMX_METHOD_LRP, cbmx::attribution::IntegratedGradientsMethod{}.steps, 0, sg.sigma,
             sg.seed};
}

cbmx_status cbmx_attribute(const cbmx_model* model, const cbmx_dataset* dataset, cbmx_split split,
                           size_t sample, cbmx_target_kind kind, size_t index,
                           const cbmx_attr_config* config, cbmx_map** out) {
  return try_([&] {
    const cbmx_model& m = deref(model);
    const cbmx_dataset& ds = deref(dataset);
    const cbmx_attr_config& c = deref(config);
    auto& slot = deref(out);
    CheckFits(m.model, ds);
    const auto& s = SampleAt(ds, split, sample);
    cbmx::attribution::AttributionConfig ac;
    ac.method = MethodOf(c.method, c.ig_steps);
    if (c.smoothgrad_samples > 0) {
      ac.smoothgrad = cbmx::attribution::SmoothGradOptions{c.smoothgrad_samples,
                                                           c.smoothgrad_sigma, c.seed};
    }
    auto map = std::make_unique<cbmx_map>();
    map->kind = kind;
    if (kind == CBMX_TARGET_CONCEPT) {
      if (index >= m.model.num_concepts()) {
        throw cbmx::Error(cbmx::ErrorCode::kIndexOutOfRange, "concept " + std::to_string(index));
      }
      map->values = cbmx::attribution::Compute(ac, m.model.g, s.image, index).values;
    } else if (kind == CBMX_TARGET_CLASS) {
      if (index >= m.model.num_classes()) {
        throw cbmx::Error(cbmx::ErrorCode::kIndexOutOfRange, "class " + std::to_string(index));
      }
      cbmx::cbm::Prediction p = cbmx::cbm::Predict(m.model, s.image);
      map->values = cbmx::attribution::Compute(ac, m.model.f, p.bottleneck, index).values;
      map->concept_names = m.model.concept_names;
      map->presence = std::move(p.concepts.presence);
    } else {
      throw cbmx::Error(cbmx::ErrorCode::kInvalidArgument, "unknown target kind");
    }
    slot = map.release();
  });
}

void cbmx_map_free(cbmx_map* map) { delete map; }

cbmx_status cbmx_map_shape(const cbmx_map* map, size_t dims[3], size_t* rank) {
  return try_([&] {
    const cbmx::Shape& shape = deref(map).values.shape();
    size_t* d = &deref(dims);
    for (std::size_t i = 0; i < 3; ++i) d[i] = i < shape.size() ? shape[i] : 0;
    deref(rank) = shape.size();
  });
}

cbmx_status cbmx_map_data(const cbmx_map* map, const double** data, size_t* size) {
  return try_([&] {
    const cbmx_map& m = deref(map);
    deref(data) = m.values.values().data();
    deref(size) = m.values.size();
  });
}

cbmx_status cbmx_map_peak(const cbmx_map* map, size_t* row, size_t* col) {
  return try_([&] {
    const cbmx_map& m = deref(map);
    const cbmx::Tensor grid = m.values.rank() == 1
                                  ? m.values.Reshaped({1, m.values.size()})
                                  : cbmx::attribution::ChannelReduce(m.values);
    const cbmx::evalkit::GridPoint peak = cbmx::evalkit::MostSalientPoint(grid);
    deref(row) = peak.row;
    deref(col) = peak.col;
  });
}

cbmx_status cbmx_map_sign_pattern(const cbmx_map* map, cbmx_sign_pattern* out) {
  return try_([&] {
    const cbmx_map& m = deref(map);
    cbmx_sign_pattern& o = deref(out);
    if (m.kind != CBMX_TARGET_CLASS) {
      throw cbmx::Error(cbmx::ErrorCode::kInvalidArgument, "sign patterns need a class target");
    }
    const cbmx::evalkit::SignPattern s =
        cbmx::evalkit::SignPatternSummary(m.values.values(), m.presence);
    o = {s.present_pos, s.present_neg, s.absent_pos, s.absent_neg, s.zero};
  });
}

cbmx_status cbmx_map_write_ppm(const cbmx_map* map, const char* path) {
  return try_([&] {
    cbmx::WriteFile(path_arg(path),
                    cbmx::EncodePpm(cbmx::attribution::RenderSignedMap(deref(map).values)));
  });
}

cbmx_status cbmx_map_write_csv(const cbmx_map* map, const char* path) {
  return try_([&] {
    const cbmx_map& m = deref(map);
    std::string csv;
    if (m.kind == CBMX_TARGET_CLASS) {
      csv = "concept_id,concept_name,relevance\n";
      for (std::size_t k = 0; k < m.values.size(); ++k) {
        csv += std::to_string(k) + "," + m.concept_names.at(k) + "," +
               cbmx::io::FormatNumber(m.values[k]) + "\n";
      }
    } else {
      const cbmx::Tensor grid = cbmx::attribution::ChannelReduce(m.values);
      csv = "row,col,saliency\n";
      for (std::size_t r = 0; r < grid.dim(0); ++r) {
        for (std::size_t c = 0; c < grid.dim(1); ++c) {
          csv += std::to_string(r) + "," + std::to_string(c) + "," +
                 cbmx::io::FormatNumber(grid[r * grid.dim(1) + c]) + "\n";
        }
      }
    }
    cbmx::io::ExportCsv(csv, path_arg(path));
  });
}

cbmx_status cbmx_pointing_csv(const cbmx_model* model, const cbmx_dataset* dataset,
                              cbmx_split split, const cbmx_method* methods, size_t n_methods,
                              const size_t* concepts, const size_t* parts, size_t n_pairs,
                              size_t max_samples, size_t ig_steps, const char* path) {
  return try_([&] {
    const cbmx_model& m = deref(model);
    const cbmx_dataset& ds = deref(dataset);
    CheckFits(m.model, ds);
    if (n_methods == 0 || n_pairs == 0) {
      throw cbmx::Error(cbmx::ErrorCode::kEmpty, "need at least one method and one concept");
    }
    std::map<std::size_t, std::size_t> mapping;
    for (std::size_t i = 0; i < n_pairs; ++i) {
      if (!mapping.emplace((&deref(concepts))[i], (&deref(parts))[i]).second) {
        throw cbmx::Error(cbmx::ErrorCode::kInvalidArgument, "concept mapped twice");
      }
    }
    const auto& samples = Split(ds, split);
    const std::size_t n =
        max_samples == 0 ? samples.size() : std::min(max_samples, samples.size());
    std::vector<cbmx::evalkit::PointingResult> results;
    for (std::size_t i = 0; i < n_methods; ++i) {
      cbmx::attribution::AttributionConfig config;
      config.method = MethodOf((&deref(methods))[i], ig_steps);
      results.push_back(cbmx::evalkit::DistancePointingGame(
          std::span(samples).first(n), m.model, config, mapping));
    }
    cbmx::io::ExportCsv(cbmx::io::PointingCsv(results), path_arg(path));
  });
}

cbmx_status cbmx_contributions_csv(const cbmx_model* model, const cbmx_dataset* dataset,
                                   cbmx_split split, size_t sample, int has_target, size_t target,
                                   const char* path) {
  return try_([&] {
    const cbmx_model& m = deref(model);
    const cbmx_dataset& ds = deref(dataset);
    CheckFits(m.model, ds);
    const cbmx::cbm::Prediction p = cbmx::cbm::Predict(m.model, SampleAt(ds, split, sample).image);
    const std::size_t t = has_target ? target : cbmx::cbm::Argmax(p.class_probs.values());
    cbmx::io::ExportCsv(
        cbmx::io::ContributionCsv(cbmx::evalkit::BuildContributionReport(m.model, p.bottleneck, t)),
        path_arg(path));
  });
}

cbmx_status cbmx_intervene_csv(const cbmx_model* model, const cbmx_dataset* dataset,
                               cbmx_split split, size_t sample, const size_t* indices,
                               const double* values, size_t n_overrides, const char* path) {
  return try_([&] {
    const cbmx_model& m = deref(model);
    const cbmx_dataset& ds = deref(dataset);
    CheckFits(m.model, ds);
    std::map<std::size_t, double> overrides;
    for (std::size_t i = 0; i < n_overrides; ++i) {
      overrides[(&deref(indices))[i]] = (&deref(values))[i];
    }
    const cbmx::cbm::Prediction p = cbmx::cbm::Predict(m.model, SampleAt(ds, split, sample).image);
    const cbmx::cbm::InterventionResult r = cbmx::cbm::Intervene(m.model, p.bottleneck, overrides);
    cbmx::io::ExportCsv(cbmx::io::InterventionCsv(r, m.model.class_names), path_arg(path));
  });
}

cbmx_status cbmx_serve(const cbmx_model* model, const cbmx_dataset* dataset, cbmx_split split,
                       const char* host, int port) {
  return try_([&] {
    const cbmx_model& m = deref(model);
    const cbmx_dataset& ds = deref(dataset);
    CheckFits(m.model, ds);
    const cbmx::server::Service service(m.model, Split(ds, split));
    cbmx::server::HttpServer http(service);
    const std::string h = host != nullptr && *host != '\0' ? host : "127.0.0.1";
    if (http.Bind(h, port) < 0) {
      throw cbmx::Error(cbmx::ErrorCode::kIo, "cannot bind " + h + ":" + std::to_string(port));
    }
    if (!http.Listen()) throw cbmx::Error(cbmx::ErrorCode::kIo, "server stopped with an error");
  });
}

}  // extern "C"
