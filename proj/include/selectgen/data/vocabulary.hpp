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

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "selectgen/core/errors.hpp"
#include "selectgen/data/tokenize.hpp"
#include "selectgen/types.hpp"

namespace selectgen::data {

// Token <-> id maps with four reserved ids and a stopword flag per token.
class Vocabulary {
 public:
  Vocabulary() {
    for (const char* r : {"<pad>", "<s>", "</s>", "<unk>"}) {
      index_.emplace(r, static_cast<TokenId>(tokens_.size()));
      tokens_.emplace_back(r);
      stop_.push_back(true);
    }
  }

  // Idempotent; a later call can only turn the stopword flag on.
  TokenId add(const std::string& token, bool stopword = false) {
    auto it = index_.find(token);
    if (it != index_.end()) {
      if (stopword) stop_[it->second] = true;
      return it->second;
    }
    const auto id = static_cast<TokenId>(tokens_.size());
    index_.emplace(token, id);
    tokens_.push_back(token);
    stop_.push_back(stopword || is_punctuation(token));
    return id;
  }

  std::size_t size() const noexcept { return tokens_.size(); }

  std::optional<TokenId> find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  TokenId id(std::string_view token) const { return find(token).value_or(kUnkId); }
  const std::string& token(TokenId id) const { return tokens_.at(id); }

  bool is_reserved(TokenId id) const noexcept { return id < kNumReserved; }
  bool is_stopword(TokenId id) const { return stop_.at(id); }

  Sequence encode(const std::vector<std::string>& tokens) const {
    Sequence s;
    for (const auto& t : tokens) {
      s.ids.push_back(id(t));
      s.surface.push_back(t);
    }
    return s;
  }

  // Appends the end-of-sequence terminator scored by the decoder.
  Sequence encode_target(const std::vector<std::string>& tokens) const {
    Sequence s = encode(tokens);
    s.ids.push_back(kEosId);
    s.surface.push_back(token(kEosId));
    return s;
  }

  // Surface tokens up to the first end-of-sequence, reserved ids dropped.
  std::vector<std::string> decode(const std::vector<TokenId>& ids) const {
    std::vector<std::string> out;
    for (TokenId id : ids) {
      if (id == kEosId) break;
      if (is_reserved(id)) continue;
      out.push_back(token(id));
    }
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json tokens = nlohmann::json::array();
    nlohmann::json stop = nlohmann::json::array();
    for (std::size_t i = kNumReserved; i < tokens_.size(); ++i) {
      tokens.push_back(tokens_[i]);
      stop.push_back(stop_[i] ? 1 : 0);
    }
    return {{"tokens", tokens}, {"stopword", stop}};
  }

  static Vocabulary from_json(const nlohmann::json& j) {
    Vocabulary v;
    const auto& tokens = j.at("tokens");
    const auto& stop = j.at("stopword");
    if (tokens.size() != stop.size()) throw Error("vocabulary: token/stopword length mismatch");
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const auto tok = tokens[i].get<std::string>();
      if (v.find(tok)) throw Error("vocabulary: duplicate token '" + tok + "'");
      const TokenId id = v.add(tok, stop[i].get<int>() != 0);
      v.stop_[id] = stop[i].get<int>() != 0;
    }
    return v;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.stop_ == b.stop_;
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<bool> stop_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace selectgen::data
