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

#include "cbmx/server.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "cbmx/attribution.hpp"
#include "cbmx/error.hpp"
#include "cbmx/evalkit.hpp"
#include "cbmx/image.hpp"
#include "httplib.h"
#include "json.hpp"

namespace cbmx::server {
namespace {

using Json = nlohmann::ordered_json;

struct HttpError {
  int status;
  std::string message;
};

[[noreturn]] void Fail(int status, const std::string& message) { throw HttpError{status, message}; }

Response JsonResponse(const Json& body, int status = 200) { return {status, body.dump()}; }

Json ParseBody(const std::string& body) {
  try {
    Json j = Json::parse(body);
    if (!j.is_object()) Fail(400, "request body must be a JSON object");
    return j;
  } catch (const Json::parse_error& e) {
    Fail(400, std::string("malformed JSON: ") + e.what());
  }
}

std::size_t IndexField(const Json& j, const char* name) {
  if (!j.contains(name)) Fail(422, std::string("missing field '") + name + "'");
  const Json& v = j.at(name);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    Fail(422, std::string("'") + name + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

std::size_t ParseIndex(const std::string& text, const char* name) {
  if (text.empty() || text.size() > 18 || text.find_first_not_of("0123456789") != std::string::npos) {
    Fail(422, std::string("'") + name + "' must be a non-negative integer");
  }
  return std::stoull(text);
}

Json ToJson(const Tensor& t) { return Json(t.vector()); }

Json GridJson(const Tensor& grid) {
  Json rows = Json::array();
  for (std::size_t r = 0; r < grid.dim(0); ++r) {
    Json row = Json::array();
    for (std::size_t c = 0; c < grid.dim(1); ++c) row.push_back(grid[r * grid.dim(1) + c]);
    rows.push_back(std::move(row));
  }
  return rows;
}

Json ReportJson(const evalkit::ContributionReport& report) {
  Json rows = Json::array();
  for (const evalkit::ContributionRow& row : report.rows) {
    rows.push_back({{"concept_id", row.concept_id},
                    {"concept_name", row.concept_name},
                    {"concept_value", row.concept_value},
                    {"relevancy", row.relevance},
                    {"contribution_percent", row.contribution_percent}});
  }
  return {{"target_class", report.target_class}, {"all_zero", report.all_zero}, {"rows", rows}};
}

attribution::AttributionConfig ParseConfig(const Json& body) {
  if (!body.contains("method") || !body.at("method").is_string()) Fail(422, "missing method");
  const std::string method = body.at("method").get<std::string>();
  const Json options = body.value("options", Json::object());
  if (!options.is_object()) Fail(422, "options must be an object");
  attribution::AttributionConfig config;
  if (method == "lrp") {
    config.method = attribution::LrpMethod{};
  } else if (method == "grad") {
    config.method = attribution::GradientMethod{};
  } else if (method == "ig") {
    attribution::IntegratedGradientsMethod ig;
    if (options.contains("steps")) ig.steps = IndexField(options, "steps");
    config.method = ig;
  } else {
    Fail(422, "unknown method '" + method + "'");
  }
  if (options.contains("smoothgrad")) {
    const Json& sg = options.at("smoothgrad");
    if (!sg.is_object()) Fail(422, "smoothgrad must be an object");
    attribution::SmoothGradOptions opts;
    if (sg.contains("n")) opts.n_samples = IndexField(sg, "n");
    if (sg.contains("sigma")) {
      if (!sg.at("sigma").is_number()) Fail(422, "sigma must be a number");
      opts.sigma = sg.at("sigma").get<double>();
    }
    if (options.contains("seed")) opts.seed = IndexField(options, "seed");
    config.smoothgrad = opts;
  }
  return config;
}

}  // namespace

Service::Service(cbm::CbmModel model, std::vector<synth::SyntheticSample> samples)
    : model_(std::move(model)), samples_(std::move(samples)) {
  cbm::ValidateModel(model_);
  canonical_g_ = nn::IsCanonized(model_.g) ? model_.g : nn::FoldBatchNorm(model_.g);
  for (const synth::SyntheticSample& s : samples_) {
    if (s.image.shape() != model_.g.input_shape || s.concepts.size() != model_.num_concepts()) {
      throw Error(ErrorCode::kShapeMismatch, "model does not fit the dataset samples");
    }
  }
}

Response Service::Handle(const Request& request) const {
  auto sample_at = [&](std::size_t id) -> const synth::SyntheticSample& {
    if (id >= samples_.size()) Fail(404, "unknown sample id " + std::to_string(id));
    return samples_[id];
  };
  auto require = [&](const char* method) {
    if (request.method != method) Fail(405, "method not allowed");
  };
  try {
    if (request.path == "/samples") {
      require("GET");
      Json out = Json::array();
      for (std::size_t id = 0; id < samples_.size(); ++id) {
        const synth::SyntheticSample& s = samples_[id];
        out.push_back({{"id", id},
                       {"class_label", s.class_label},
                       {"class_name", model_.class_names.at(s.class_label)},
                       {"thumbnail", Base64Encode(EncodePpm(ImageFromTensor(s.image)))}});
      }
      return JsonResponse(out);
    }

    if (request.path == "/predict") {
      require("POST");
      const Json body = ParseBody(request.body);
      const cbm::Prediction p = cbm::Predict(model_, sample_at(IndexField(body, "sample_id")).image);
      Json concepts = Json::array();
      for (std::size_t k = 0; k < model_.num_concepts(); ++k) {
        concepts.push_back({{"id", k},
                            {"name", model_.concept_names[k]},
                            {"value", p.concepts.values[k]},
                            {"present", static_cast<bool>(p.concepts.presence[k])}});
      }
      return JsonResponse({{"concepts", concepts},
                           {"class_probs", ToJson(p.class_probs)},
                           {"predicted_class", cbm::Argmax(p.class_probs.values())}});
    }

    if (request.path == "/attribute") {
      require("POST");
      const Json body = ParseBody(request.body);
      const synth::SyntheticSample& sample = sample_at(IndexField(body, "sample_id"));
      if (!body.contains("target") || !body.at("target").is_object()) Fail(422, "missing target");
      const Json& target = body.at("target");
      const std::string kind = target.value("kind", "");
      const std::size_t index = IndexField(target, "index");
      const attribution::AttributionConfig config = ParseConfig(body);
      Json out;
      if (kind == "concept") {
        if (index >= model_.num_concepts()) Fail(422, "concept index out of range");
        const attribution::AttributionMap map =
            attribution::Compute(config, canonical_g_, sample.image, index);
        const Tensor grid = attribution::ChannelReduce(map.values);
        const evalkit::GridPoint peak = evalkit::MostSalientPoint(grid);
        out["map_png_or_ppm"] = Base64Encode(EncodePpm(attribution::RenderSignedMap(map.values)));
        out["reduced_grid"] = GridJson(grid);
        out["peak"] = {{"row", peak.row}, {"col", peak.col}};
      } else if (kind == "class") {
        if (index >= model_.num_classes()) Fail(404, "unknown class " + std::to_string(index));
        const cbm::Prediction p = cbm::Predict(model_, sample.image);
        const attribution::AttributionMap map =
            attribution::Compute(config, model_.f, p.bottleneck, index);
        const Tensor grid = map.values.Reshaped({1, map.values.size()});
        const evalkit::GridPoint peak = evalkit::MostSalientPoint(grid);
        out["map_png_or_ppm"] = Base64Encode(EncodePpm(attribution::RenderSignedMap(map.values)));
        out["reduced_grid"] = GridJson(grid);
        out["peak"] = {{"row", peak.row}, {"col", peak.col}};
        out["relevance"] = ToJson(map.values);
      } else {
        Fail(422, "target kind must be 'concept' or 'class'");
      }
      return JsonResponse(out);
    }

    if (request.path == "/intervene") {
      require("POST");
      const Json body = ParseBody(request.body);
      const synth::SyntheticSample& sample = sample_at(IndexField(body, "sample_id"));
      std::map<std::size_t, double> overrides;
      const Json raw = body.value("overrides", Json::object());
      if (!raw.is_object()) Fail(422, "overrides must be an object");
      for (const auto& [key, value] : raw.items()) {
        const std::size_t index = ParseIndex(key, "override index");
        if (index >= model_.num_concepts()) Fail(422, "concept index " + key + " out of range");
        if (!value.is_number() || !std::isfinite(value.get<double>())) {
          Fail(422, "override for " + key + " must be a finite number");
        }
        overrides[index] = value.get<double>();
      }
      const cbm::Prediction p = cbm::Predict(model_, sample.image);
      const cbm::InterventionResult r = cbm::Intervene(model_, p.bottleneck, overrides);
      std::size_t target = cbm::Argmax(r.new_probs.values());
      if (body.contains("target_class") && !body.at("target_class").is_null()) {
        target = IndexField(body, "target_class");
        if (target >= model_.num_classes()) Fail(404, "unknown class " + std::to_string(target));
      }
      return JsonResponse(
          {{"old_probs", ToJson(r.old_probs)},
           {"new_probs", ToJson(r.new_probs)},
           {"delta", ToJson(r.delta)},
           {"new_contributions",
            ReportJson(evalkit::BuildContributionReport(model_, r.bottleneck, target))}});
    }

    if (request.path == "/contributions") {
      require("GET");
      const auto id = request.query.find("sample_id");
      if (id == request.query.end()) Fail(422, "missing sample_id");
      const synth::SyntheticSample& sample = sample_at(ParseIndex(id->second, "sample_id"));
      const cbm::Prediction p = cbm::Predict(model_, sample.image);
      std::size_t target = cbm::Argmax(p.class_probs.values());
      if (const auto c = request.query.find("class"); c != request.query.end()) {
        target = ParseIndex(c->second, "class");
        if (target >= model_.num_classes()) Fail(404, "unknown class " + c->second);
      }
      return JsonResponse(ReportJson(evalkit::BuildContributionReport(model_, p.bottleneck, target)));
    }

    Fail(404, "no route for " + request.path);
  } catch (const HttpError& e) {
    return JsonResponse({{"error", e.message}}, e.status);
  } catch (const Error& e) {
    const int status = e.code() == ErrorCode::kNonFiniteValue ? 500 : 422;
    return JsonResponse({{"error", e.what()}}, status);
  }
}

struct HttpServer::Impl {
  const Service& service;
  httplib::Server server;
};

HttpServer::HttpServer(const Service& service) : impl_(new Impl{service, {}}) {
  auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
    Request request{req.method, req.path, {}, req.body};
    for (const auto& [key, value] : req.params) request.query.emplace(key, value);
    const Response response = impl_->service.Handle(request);
    res.status = response.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(response.body, "application/json");
  };
  impl_->server.Get(".*", dispatch);
  impl_->server.Post(".*", dispatch);
  impl_->server.Options(".*", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  });
}

HttpServer::~HttpServer() { Stop(); }

int HttpServer::Bind(const std::string& host, int port) {
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

int HttpServer::BindToAnyPort(const std::string& host) {
  return impl_->server.bind_to_any_port(host);
}

bool HttpServer::Listen() { return impl_->server.listen_after_bind(); }

void HttpServer::Stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

}  // namespace cbmx::server
