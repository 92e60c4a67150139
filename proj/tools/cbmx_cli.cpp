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

// Command-line front end. Everything goes through the C API.

#include <cstdio>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "cbmx/cbmx.h"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct UsageError {
  std::string message;
};

struct ApiError {
  cbmx_status status;
};

void Check(cbmx_status status) {
  if (status != CBMX_OK) throw ApiError{status};
}

int ExitCodeFor(cbmx_status status) {
  switch (status) {
    case CBMX_INVALID_ARGUMENT:
    case CBMX_CONFIG_INVALID: return kExitUsage;
    case CBMX_NON_FINITE: return kExitNumeric;
    default: return kExitData;
  }
}

using DatasetPtr = std::unique_ptr<cbmx_dataset, decltype(&cbmx_dataset_free)>;
using ModelPtr = std::unique_ptr<cbmx_model, decltype(&cbmx_model_free)>;
using MapPtr = std::unique_ptr<cbmx_map, decltype(&cbmx_map_free)>;

DatasetPtr LoadDataset(const std::string& dir) {
  cbmx_dataset* ds = nullptr;
  Check(cbmx_dataset_load(dir.c_str(), &ds));
  return {ds, cbmx_dataset_free};
}

ModelPtr LoadModel(const std::string& path) {
  cbmx_model* m = nullptr;
  Check(cbmx_model_load(path.c_str(), &m));
  return {m, cbmx_model_free};
}

std::vector<std::string> SplitList(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find(sep, start), text.size());
    out.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

std::size_t ParseIndex(const std::string& text, const std::string& what) {
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos) {
    throw UsageError{"invalid " + what + " '" + text + "'"};
  }
  return std::stoull(text);
}

double ParseDouble(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw UsageError{"invalid " + what + " '" + text + "'"};
}

std::pair<cbmx_target_kind, std::size_t> ParseTarget(const std::string& text) {
  const std::size_t colon = text.find(':');
  if (colon == std::string::npos) throw UsageError{"target must be concept:K or class:K"};
  const std::string kind = text.substr(0, colon);
  const std::size_t index = ParseIndex(text.substr(colon + 1), "target index");
  if (kind == "concept") return {CBMX_TARGET_CONCEPT, index};
  if (kind == "class") return {CBMX_TARGET_CLASS, index};
  throw UsageError{"target must be concept:K or class:K"};
}

cbmx_method ParseMethod(const std::string& name) {
  if (name == "lrp") return CBMX_METHOD_LRP;
  if (name == "grad") return CBMX_METHOD_GRAD;
  if (name == "ig") return CBMX_METHOD_IG;
  throw UsageError{"unknown method '" + name + "' (lrp, grad, ig)"};
}

cbmx_split ParseSplit(const std::string& name) {
  if (name == "test") return CBMX_SPLIT_TEST;
  if (name == "train") return CBMX_SPLIT_TRAIN;
  throw UsageError{"split must be train or test"};
}

bool ParseBool(const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw UsageError{"expected true or false, got '" + text + "'"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cbmx: concept bottleneck models with saliency attribution"};
  app.require_subcommand(1);

  // gen
  cbmx_gen_config gen;
  cbmx_gen_config_default(&gen);
  std::string gen_out;
  std::vector<std::size_t> gen_size;
  auto* cmd_gen = app.add_subcommand("gen", "Generate a synthetic concept dataset");
  cmd_gen->add_option("--out", gen_out, "Output directory")->required();
  cmd_gen->add_option("--seed", gen.seed, "RNG seed")->required();
  cmd_gen->add_option("--samples", gen.samples, "Total samples (80% train)")->required();
  cmd_gen->add_option("--size", gen_size, "Image height and width")->expected(2);
  cmd_gen->add_option("--parts", gen.parts, "Number of parts");
  cmd_gen->add_option("--colors", gen.colors, "Number of colours");
  cmd_gen->add_option("--classes", gen.classes, "Number of classes");
  cmd_gen->add_option("--noise", gen.noise, "Background noise amplitude");

  // train
  cbmx_train_config train;
  cbmx_train_config_default(&train);
  std::string train_data, train_out, train_regime, train_sigmoid = "true", train_history;
  auto* cmd_train = app.add_subcommand("train", "Train a concept bottleneck model");
  cmd_train->add_option("--data", train_data, "Dataset directory")->required();
  cmd_train->add_option("--regime", train_regime, "independent|sequential|joint")->required();
  cmd_train->add_option("--sigmoid", train_sigmoid, "Sigmoid between g and f (true|false)");
  cmd_train->add_option("--lambda", train.lambda, "Concept loss weight (joint)");
  cmd_train->add_option("--epochs", train.epochs, "Epochs per phase");
  cmd_train->add_option("--batch-size", train.batch_size, "Minibatch size");
  cmd_train->add_option("--lr", train.learning_rate, "Learning rate");
  cmd_train->add_option("--seed", train.seed, "RNG seed");
  cmd_train->add_option("--history", train_history, "Write per-epoch history CSV");
  cmd_train->add_option("--out", train_out, "Model file")->required();

  // Options shared by the sample-level commands.
  std::string model_path, data_dir, split_name = "test", out_path;
  std::size_t sample = 0;
  auto add_common = [&](CLI::App* cmd, bool with_sample) {
    cmd->add_option("--model", model_path, "Model file")->required();
    cmd->add_option("--data", data_dir, "Dataset directory")->required();
    cmd->add_option("--split", split_name, "Dataset split (train|test)");
    if (with_sample) cmd->add_option("--sample", sample, "Sample index in the split")->required();
  };

  // attribute
  cbmx_attr_config attr;
  cbmx_attr_config_default(&attr);
  std::string attr_target, attr_method, attr_csv;
  std::vector<std::string> attr_smoothgrad;
  auto* cmd_attr = app.add_subcommand("attribute", "Render a saliency map");
  add_common(cmd_attr, true);
  cmd_attr->add_option("--target", attr_target, "concept:K or class:K")->required();
  cmd_attr->add_option("--method", attr_method, "lrp|grad|ig")->required();
  cmd_attr->add_option("--smoothgrad", attr_smoothgrad, "N SIGMA")->expected(2);
  cmd_attr->add_option("--steps", attr.ig_steps, "Integrated gradients steps");
  cmd_attr->add_option("--seed", attr.seed, "SmoothGrad seed");
  cmd_attr->add_option("--out", out_path, "PPM output")->required();
  cmd_attr->add_option("--csv", attr_csv, "Also write the map as CSV");

  // pointing
  std::string point_methods, point_map;
  std::size_t point_max = 0, point_steps = attr.ig_steps;
  auto* cmd_point = app.add_subcommand("pointing", "Distance pointing game");
  add_common(cmd_point, false);
  cmd_point->add_option("--methods", point_methods, "Comma list of lrp,grad,ig")->required();
  cmd_point->add_option("--map", point_map, "CONCEPT=PART,... (default: every concept)");
  cmd_point->add_option("--max-samples", point_max, "Use the first N samples (0 = all)");
  cmd_point->add_option("--steps", point_steps, "Integrated gradients steps");
  cmd_point->add_option("--out", out_path, "CSV output")->required();

  // contrib
  std::string contrib_target;
  auto* cmd_contrib = app.add_subcommand("contrib", "Concept contribution report");
  add_common(cmd_contrib, true);
  cmd_contrib->add_option("--target", contrib_target, "class:K (default: predicted class)");
  cmd_contrib->add_option("--out", out_path, "CSV output")->required();

  // intervene
  std::string intervene_set;
  auto* cmd_int = app.add_subcommand("intervene", "Override concepts and re-run f");
  add_common(cmd_int, true);
  cmd_int->add_option("--set", intervene_set, "K=V,...")->required();
  cmd_int->add_option("--out", out_path, "CSV output")->required();

  // serve
  std::string host = "127.0.0.1";
  int port = 8080;
  auto* cmd_serve = app.add_subcommand("serve", "Serve the HTTP API");
  add_common(cmd_serve, false);
  cmd_serve->add_option("--host", host, "Bind address");
  cmd_serve->add_option("--port", port, "Port")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (cmd_gen->parsed()) {
      if (!gen_size.empty()) {
        gen.height = gen_size[0];
        gen.width = gen_size[1];
      }
      cbmx_dataset* ds = nullptr;
      Check(cbmx_dataset_generate(&gen, &ds));
      DatasetPtr owned(ds, cbmx_dataset_free);
      Check(cbmx_dataset_save(ds, gen_out.c_str()));
      std::size_t n_train = 0, n_test = 0;
      Check(cbmx_dataset_size(ds, CBMX_SPLIT_TRAIN, &n_train));
      Check(cbmx_dataset_size(ds, CBMX_SPLIT_TEST, &n_test));
      std::printf("wrote %s: %zu train, %zu test\n", gen_out.c_str(), n_train, n_test);
      return 0;
    }

    if (cmd_train->parsed()) {
      if (train_regime == "independent") {
        train.regime = CBMX_REGIME_INDEPENDENT;
      } else if (train_regime == "sequential") {
        train.regime = CBMX_REGIME_SEQUENTIAL;
      } else if (train_regime == "joint") {
        train.regime = CBMX_REGIME_JOINT;
      } else {
        throw UsageError{"regime must be independent, sequential or joint"};
      }
      train.sigmoid_between = ParseBool(train_sigmoid) ? 1 : 0;
      const DatasetPtr ds = LoadDataset(train_data);
      cbmx_model* m = nullptr;
      Check(cbmx_model_train(ds.get(), &train, &m));
      const ModelPtr model(m, cbmx_model_free);
      Check(cbmx_model_save(m, train_out.c_str()));
      if (!train_history.empty()) Check(cbmx_model_write_history_csv(m, train_history.c_str()));
      cbmx_metrics metrics;
      Check(cbmx_model_evaluate(m, ds.get(), CBMX_SPLIT_TEST, &metrics));
      std::printf("test concept_accuracy=%.4f class_accuracy=%.4f\n", metrics.concept_accuracy,
                  metrics.class_accuracy);
      return 0;
    }

    const cbmx_split split = ParseSplit(split_name);

    if (cmd_attr->parsed()) {
      const auto [kind, index] = ParseTarget(attr_target);
      attr.method = ParseMethod(attr_method);
      if (!attr_smoothgrad.empty()) {
        attr.smoothgrad_samples = ParseIndex(attr_smoothgrad[0], "SmoothGrad sample count");
        attr.smoothgrad_sigma = ParseDouble(attr_smoothgrad[1], "SmoothGrad sigma");
        if (attr.smoothgrad_samples == 0) throw UsageError{"SmoothGrad needs N >= 1"};
      }
      const ModelPtr model = LoadModel(model_path);
      const DatasetPtr ds = LoadDataset(data_dir);
      cbmx_map* raw = nullptr;
      Check(cbmx_attribute(model.get(), ds.get(), split, sample, kind, index, &attr, &raw));
      const MapPtr map(raw, cbmx_map_free);
      Check(cbmx_map_write_ppm(raw, out_path.c_str()));
      if (!attr_csv.empty()) Check(cbmx_map_write_csv(raw, attr_csv.c_str()));
      std::size_t row = 0, col = 0;
      Check(cbmx_map_peak(raw, &row, &col));
      std::printf("peak row=%zu col=%zu\n", row, col);
      if (kind == CBMX_TARGET_CLASS) {
        cbmx_sign_pattern s;
        Check(cbmx_map_sign_pattern(raw, &s));
        std::printf("sign_pattern present_pos=%zu present_neg=%zu absent_pos=%zu absent_neg=%zu "
                    "zero=%zu\n",
                    s.present_pos, s.present_neg, s.absent_pos, s.absent_neg, s.zero);
      }
      return 0;
    }

    if (cmd_point->parsed()) {
      std::vector<cbmx_method> methods;
      for (const std::string& m : SplitList(point_methods, ',')) methods.push_back(ParseMethod(m));
      const ModelPtr model = LoadModel(model_path);
      const DatasetPtr ds = LoadDataset(data_dir);
      std::vector<std::size_t> concepts, parts;
      if (point_map.empty()) {
        std::size_t k = 0;
        Check(cbmx_dataset_num_concepts(ds.get(), &k));
        for (std::size_t c = 0; c < k; ++c) {
          std::size_t p = 0;
          Check(cbmx_dataset_concept_part(ds.get(), c, &p));
          concepts.push_back(c);
          parts.push_back(p);
        }
      } else {
        for (const std::string& pair : SplitList(point_map, ',')) {
          const std::size_t eq = pair.find('=');
          if (eq == std::string::npos) throw UsageError{"map entries must be CONCEPT=PART"};
          concepts.push_back(ParseIndex(pair.substr(0, eq), "concept"));
          parts.push_back(ParseIndex(pair.substr(eq + 1), "part"));
        }
      }
      Check(cbmx_pointing_csv(model.get(), ds.get(), split, methods.data(), methods.size(),
                              concepts.data(), parts.data(), concepts.size(), point_max,
                              point_steps, out_path.c_str()));
      return 0;
    }

    if (cmd_contrib->parsed()) {
      int has_target = 0;
      std::size_t target = 0;
      if (!contrib_target.empty()) {
        const auto [kind, index] = ParseTarget(contrib_target);
        if (kind != CBMX_TARGET_CLASS) throw UsageError{"contrib target must be class:K"};
        has_target = 1;
        target = index;
      }
      const ModelPtr model = LoadModel(model_path);
      const DatasetPtr ds = LoadDataset(data_dir);
      Check(cbmx_contributions_csv(model.get(), ds.get(), split, sample, has_target, target,
                                   out_path.c_str()));
      return 0;
    }

    if (cmd_int->parsed()) {
      std::vector<std::size_t> indices;
      std::vector<double> values;
      for (const std::string& pair : SplitList(intervene_set, ',')) {
        const std::size_t eq = pair.find('=');
        if (eq == std::string::npos) throw UsageError{"overrides must be K=V"};
        indices.push_back(ParseIndex(pair.substr(0, eq), "concept"));
        values.push_back(ParseDouble(pair.substr(eq + 1), "override value"));
      }
      const ModelPtr model = LoadModel(model_path);
      const DatasetPtr ds = LoadDataset(data_dir);
      Check(cbmx_intervene_csv(model.get(), ds.get(), split, sample, indices.data(),
                               values.data(), indices.size(), out_path.c_str()));
      return 0;
    }

    if (cmd_serve->parsed()) {
      const ModelPtr model = LoadModel(model_path);
      const DatasetPtr ds = LoadDataset(data_dir);
      std::printf("serving on http://%s:%d\n", host.c_str(), port);
      std::fflush(stdout);
      Check(cbmx_serve(model.get(), ds.get(), split, host.c_str(), port));
      return 0;
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.message.c_str());
    return kExitUsage;
  } catch (const ApiError& e) {
    std::fprintf(stderr, "error: %s\n", cbmx_last_error());
    return ExitCodeFor(e.status);
  }
  return kExitUsage;
}
