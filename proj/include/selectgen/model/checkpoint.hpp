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

// Checkpoint files: a JSON document holding the model configuration, the
// vocabulary, an opaque training-strategy record and every parameter tensor
// by name and shape. Doubles are written with round-trip precision.

#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "selectgen/core/errors.hpp"
#include "selectgen/data/vocabulary.hpp"
#include "selectgen/model/config.hpp"
#include "selectgen/model/model.hpp"

namespace selectgen {

inline constexpr const char* kCheckpointFormat = "selectgen-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  SelectionModel model;
  data::Vocabulary vocab;
  nlohmann::json strategy;
  std::string id;  // FNV-1a hash of the file bytes, hex
};

inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string checkpoint_text(const SelectionModel& model, const data::Vocabulary& vocab,
                                   const nlohmann::json& strategy) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["model_config"] = to_json(model.config());
  j["strategy"] = strategy.is_null() ? nlohmann::json::object() : strategy;
  j["vocabulary"] = vocab.to_json();
  nlohmann::json params = nlohmann::json::array();
  const ParamStore& ps = model.params();
  for (ParamId id = 0; id < ps.size(); ++id) {
    const Tensor& t = ps.value(id);
    params.push_back({{"name", ps.name(id)},
                      {"partition", partition_name(ps.partition(id))},
                      {"shape", t.shape()},
                      {"values", t.storage()}});
  }
  j["params"] = std::move(params);
  return j.dump() + "\n";
}

inline void save_checkpoint(const std::string& path, const SelectionModel& model,
                            const data::Vocabulary& vocab, const nlohmann::json& strategy = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  out << checkpoint_text(model, vocab, strategy);
  if (!out) throw Error("failed writing checkpoint '" + path + "'");
}

inline Checkpoint parse_checkpoint(const std::string& bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (j.value("format", "") != kCheckpointFormat) throw Error("not a selectgen checkpoint");
  if (j.value("version", 0) != kCheckpointVersion)
    throw Error("unsupported checkpoint version " + j.value("version", nlohmann::json()).dump());
  data::Vocabulary vocab = data::Vocabulary::from_json(j.at("vocabulary"));
  ModelConfig cfg = model_config_from_json(j.at("model_config"));
  if (cfg.vocab_size != vocab.size()) throw Error("checkpoint vocabulary size mismatch");
  SelectionModel model(cfg);
  ParamStore& ps = model.params();
  const auto& params = j.at("params");
  if (params.size() != ps.size()) throw Error("checkpoint parameter count mismatch");
  for (const auto& p : params) {
    const ParamId id = ps.id(p.at("name").get<std::string>());
    Tensor& t = ps.value(id);
    if (p.at("shape").get<Shape>() != t.shape())
      throw Error("checkpoint shape mismatch for '" + ps.name(id) + "'");
    auto values = p.at("values").get<std::vector<double>>();
    if (values.size() != t.size()) throw Error("checkpoint value count mismatch");
    t.storage() = std::move(values);
    if (!t.all_finite()) throw Error("checkpoint holds non-finite values in '" + ps.name(id) + "'");
  }
  return Checkpoint{std::move(model), std::move(vocab), j.at("strategy"), fnv1a_hex(bytes)};
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

}  // namespace selectgen
