// Copyright 2026 The SelectGen Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// HTTP binding of InferenceService using cpp-httplib.

#pragma once

#include <string>

#include <httplib.h>

#include "selectgen/interface/service.hpp"

namespace selectgen {

inline void bind_routes(httplib::Server& server, const InferenceService& service) {
  auto forward = [&service](const httplib::Request& req, httplib::Response& res) {
    const ServiceResponse r = service.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.Get(R"(/v1/.*)", forward);
  server.Post(R"(/v1/.*)", forward);
  server.Put(R"(/v1/.*)", forward);
  server.Delete(R"(/v1/.*)", forward);
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
    res.status = 500;
    res.set_content(R"({"error":{"code":"internal","message":"internal error"}})", "application/json");
  });
}

// Blocks until the server stops.
inline bool serve(const InferenceService& service, const std::string& host, int port) {
  httplib::Server server;
  bind_routes(server, service);
  return server.listen(host, port);
}

}  // namespace selectgen
