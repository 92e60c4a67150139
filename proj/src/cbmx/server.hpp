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

#ifndef CBMX_SERVER_HPP_
#define CBMX_SERVER_HPP_

// Read-only HTTP/JSON front end over a loaded model and the samples of one
// dataset split. Sample ids are positions in that split.

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cbmx/cbm.hpp"
#include "cbmx/synthetic.hpp"

namespace cbmx::server {

struct Request {
  std::string method;  // "GET" or "POST"
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct Response {
  int status = 200;
  std::string body;  // JSON
};

class Service {
 public:
  // Throws ShapeMismatch when the model does not fit the samples.
  Service(cbm::CbmModel model, std::vector<synth::SyntheticSample> samples);

  Response Handle(const Request& request) const;

  const cbm::CbmModel& model() const { return model_; }
  const std::vector<synth::SyntheticSample>& samples() const { return samples_; }

 private:
  cbm::CbmModel model_;
  nn::Network canonical_g_;
  std::vector<synth::SyntheticSample> samples_;
};

// Blocking cpp-httplib server dispatching every route to Service::Handle.
class HttpServer {
 public:
  explicit HttpServer(const Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Returns the bound port, or -1.
  int Bind(const std::string& host, int port);
  int BindToAnyPort(const std::string& host);
  // Serves until Stop().
  bool Listen();
  void Stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cbmx::server

#endif  // CBMX_SERVER_HPP_
