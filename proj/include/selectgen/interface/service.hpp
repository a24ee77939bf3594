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

// Stateless JSON inference service over one frozen checkpoint. Transport
// agnostic: handle() maps (method, path, body) to (status, body); the HTTP
// binding lives in server.hpp.
//
// Routes (all under /v1):
//   POST /v1/encode        {source}                       -> {tokens, gamma}
//   POST /v1/generate      {source, mask?, mode?, beam?, samples?, seed?, temperature?}
//                                                         -> {tokens, mask, texts, scores}
//   POST /v1/sample-masks  {source, k?, seed?}            -> {tokens, masks}
//   POST /v1/posterior     {source, target}               -> {tokens, q, best_mask}
//   GET  /v1/health                                       -> {status, checkpoint_id}
// Errors carry {"error": {"code", "message"}}: 400 malformed request or mask
// length mismatch, 422 all-zero mask, 404/405 routing, 500 internal fault
// with an opaque incident id.

#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "selectgen/core/errors.hpp"
#include "selectgen/core/rng.hpp"
#include "selectgen/data/tokenize.hpp"
#include "selectgen/model/checkpoint.hpp"
#include "selectgen/model/inference.hpp"

namespace selectgen {

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

class InferenceService {
 public:
  explicit InferenceService(Checkpoint ckpt) : ckpt_(std::move(ckpt)) {}

  const std::string& checkpoint_id() const noexcept { return ckpt_.id; }
  const Checkpoint& checkpoint() const noexcept { return ckpt_; }

  ServiceResponse handle(const std::string& method, const std::string& path,
                         const std::string& body) const {
    try {
      if (path == "/v1/health") {
        if (method != "GET") return error(405, "method_not_allowed", "use GET for " + path);
        return {200, {{"status", "ok"}, {"checkpoint_id", ckpt_.id}}};
      }
      using Handler = nlohmann::json (InferenceService::*)(const nlohmann::json&) const;
      Handler h = nullptr;
      if (path == "/v1/encode") h = &InferenceService::encode;
      else if (path == "/v1/generate") h = &InferenceService::generate_texts;
      else if (path == "/v1/sample-masks") h = &InferenceService::sample_masks;
      else if (path == "/v1/posterior") h = &InferenceService::posterior_masks;
      if (!h) return error(404, "not_found", "no route " + path);
      if (method != "POST") return error(405, "method_not_allowed", "use POST for " + path);
      nlohmann::json req;
      try {
        req = nlohmann::json::parse(body);
      } catch (const nlohmann::json::exception&) {
        return error(400, "malformed_body", "request body is not valid JSON");
      }
      if (!req.is_object()) return error(400, "malformed_body", "request body must be a JSON object");
      return {200, (this->*h)(req)};
    } catch (const BadRequest& e) {
      return error(400, "bad_request", e.what());
    } catch (const AllMaskedError& e) {
      return error(422, "all_masked", e.what());
    } catch (const LengthExceeded& e) {
      return error(400, "too_long", e.what());
    } catch (const std::exception&) {
      return internal_error();
    }
  }

 private:
  struct BadRequest : Error {
    using Error::Error;
  };

  static ServiceResponse error(int status, const std::string& code, const std::string& message) {
    return {status, {{"error", {{"code", code}, {"message", message}}}}};
  }

  ServiceResponse internal_error() const {
    const std::uint64_t n = incidents_.fetch_add(1) + 1;
    char id[32];
    std::snprintf(id, sizeof(id), "inc-%016llx",
                  static_cast<unsigned long long>(derive_seed(std::hash<std::string>{}(ckpt_.id), n)));
    return error(500, "internal", std::string("internal error, incident ") + id);
  }

  template <class T>
  static T field(const nlohmann::json& req, const char* key, T fallback) {
    if (!req.contains(key) || req.at(key).is_null()) return fallback;
    try {
      return req.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw BadRequest(std::string("field '") + key + "' has the wrong type");
    }
  }

  static std::string required_text(const nlohmann::json& req, const char* key) {
    if (!req.contains(key)) throw BadRequest(std::string("missing field '") + key + "'");
    if (!req.at(key).is_string()) throw BadRequest(std::string("field '") + key + "' must be a string");
    return req.at(key).get<std::string>();
  }

  std::pair<std::vector<std::string>, Sequence> source(const nlohmann::json& req) const {
    auto toks = data::tokenize(required_text(req, "source"));
    if (toks.empty()) throw BadRequest("source has no tokens");
    if (toks.size() > ckpt_.model.config().max_source_len)
      throw BadRequest("source exceeds " + std::to_string(ckpt_.model.config().max_source_len) +
                       " tokens");
    Sequence x = ckpt_.vocab.encode(toks);
    return {std::move(toks), std::move(x)};
  }

  static SelectionMask parse_mask(const nlohmann::json& v, std::size_t n) {
    SelectionMask m;
    if (v.is_string()) {
      try {
        m = SelectionMask::parse(v.get<std::string>());
      } catch (const std::invalid_argument& e) {
        throw BadRequest(e.what());
      }
    } else if (v.is_array()) {
      for (const auto& b : v) {
        if (!b.is_number_integer() || (b.get<int>() != 0 && b.get<int>() != 1))
          throw BadRequest("mask entries must be 0 or 1");
        m.bits.push_back(static_cast<std::uint8_t>(b.get<int>()));
      }
    } else {
      throw BadRequest("mask must be a bit-string or an array of 0/1");
    }
    if (m.size() != n)
      throw BadRequest("mask length " + std::to_string(m.size()) + " does not match " +
                       std::to_string(n) + " source tokens");
    if (!m.any()) throw AllMaskedError("request mask");
    return m;
  }

  std::string text_of(const std::vector<TokenId>& ids) const {
    return data::detokenize(ckpt_.vocab.decode(ids));
  }

  nlohmann::json encode(const nlohmann::json& req) const {
    auto [toks, x] = source(req);
    return {{"tokens", toks}, {"gamma", prior(ckpt_.model, x).probs}};
  }

  nlohmann::json generate_texts(const nlohmann::json& req) const {
    auto [toks, x] = source(req);
    const SelectionMask mask = req.contains("mask") && !req.at("mask").is_null()
                                   ? parse_mask(req.at("mask"), x.size())
                                   : best_select(prior(ckpt_.model, x));
    DecodeOptions opts;
    const std::string mode = field<std::string>(req, "mode", "greedy");
    if (mode == "greedy") opts.mode = DecodeMode::kGreedy;
    else if (mode == "beam") opts.mode = DecodeMode::kBeam;
    else if (mode == "sample") opts.mode = DecodeMode::kSample;
    else throw BadRequest("mode must be greedy, beam or sample");
    opts.beam = field<std::size_t>(req, "beam", 5);
    opts.samples = field<std::size_t>(req, "samples", 1);
    opts.temperature = field<double>(req, "temperature", 1.0);
    if (opts.beam == 0 || opts.beam > 64) throw BadRequest("beam must lie in [1, 64]");
    if (opts.samples == 0 || opts.samples > 100) throw BadRequest("samples must lie in [1, 100]");
    if (!(opts.temperature > 0)) throw BadRequest("temperature must be positive");
    Rng rng(field<std::uint64_t>(req, "seed", 0));
    nlohmann::json texts = nlohmann::json::array(), scores = nlohmann::json::array();
    for (const Generation& g : generate(ckpt_.model, x, mask, opts, &rng)) {
      texts.push_back(text_of(g.ids));
      scores.push_back(g.log_prob);
    }
    return {{"tokens", toks}, {"mask", mask.str()}, {"texts", texts}, {"scores", scores}};
  }

  nlohmann::json sample_masks(const nlohmann::json& req) const {
    auto [toks, x] = source(req);
    const auto k = field<std::size_t>(req, "k", 10);
    if (k == 0 || k > 1000) throw BadRequest("k must lie in [1, 1000]");
    Rng rng(field<std::uint64_t>(req, "seed", 0));
    const BernoulliVector gamma = prior(ckpt_.model, x);
    nlohmann::json masks = nlohmann::json::array();
    for (std::size_t i = 0; i < k; ++i) masks.push_back(sample_mask(gamma, rng).str());
    return {{"tokens", toks}, {"masks", masks}};
  }

  nlohmann::json posterior_masks(const nlohmann::json& req) const {
    auto [toks, x] = source(req);
    const auto ytoks = data::tokenize(required_text(req, "target"));
    if (ytoks.empty()) throw BadRequest("target has no tokens");
    if (ytoks.size() > ckpt_.model.config().max_target_len) throw BadRequest("target is too long");
    const BernoulliVector q = posterior(ckpt_.model, x, ckpt_.vocab.encode_target(ytoks));
    return {{"tokens", toks}, {"q", q.probs}, {"best_mask", best_select(q).str()}};
  }

  Checkpoint ckpt_;
  mutable std::atomic<std::uint64_t> incidents_{0};
};

}  // namespace selectgen
