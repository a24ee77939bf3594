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
#include <string>

#include <nlohmann/json.hpp>

#include "selectgen/core/errors.hpp"

namespace selectgen {

// How the selected encoder states are averaged for the decoder's initial
// state: divide by the source length n, or by the number of selected tokens.
enum class PoolNorm { kSourceLength, kSelectedCount };

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 32;
  std::size_t hidden = 64;           // per direction in the encoder; decoder size
  std::size_t selector_hidden = 32;  // width of both selector MLPs
  std::size_t target_embed_dim = 32;
  std::size_t target_hidden = 32;  // per direction in the target encoder
  double dropout = 0.3;
  PoolNorm pool_norm = PoolNorm::kSourceLength;
  std::size_t max_source_len = 64;
  std::size_t max_target_len = 64;
  double init_scale = 0.1;
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size},
          {"embed_dim", c.embed_dim},
          {"hidden", c.hidden},
          {"selector_hidden", c.selector_hidden},
          {"target_embed_dim", c.target_embed_dim},
          {"target_hidden", c.target_hidden},
          {"dropout", c.dropout},
          {"pool_norm", c.pool_norm == PoolNorm::kSourceLength ? "source_length" : "selected_count"},
          {"max_source_len", c.max_source_len},
          {"max_target_len", c.max_target_len},
          {"init_scale", c.init_scale}};
}

// Reads the keys present in `j` over `base`; unknown keys are rejected.
inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {}) {
  for (const auto& [key, value] : j.items()) {
    if (key == "vocab_size") base.vocab_size = value.get<std::size_t>();
    else if (key == "embed_dim") base.embed_dim = value.get<std::size_t>();
    else if (key == "hidden") base.hidden = value.get<std::size_t>();
    else if (key == "selector_hidden") base.selector_hidden = value.get<std::size_t>();
    else if (key == "target_embed_dim") base.target_embed_dim = value.get<std::size_t>();
    else if (key == "target_hidden") base.target_hidden = value.get<std::size_t>();
    else if (key == "dropout") base.dropout = value.get<double>();
    else if (key == "pool_norm") {
      const auto s = value.get<std::string>();
      if (s == "source_length") base.pool_norm = PoolNorm::kSourceLength;
      else if (s == "selected_count") base.pool_norm = PoolNorm::kSelectedCount;
      else throw ConfigError("model.pool_norm must be source_length or selected_count");
    } else if (key == "max_source_len") base.max_source_len = value.get<std::size_t>();
    else if (key == "max_target_len") base.max_target_len = value.get<std::size_t>();
    else if (key == "init_scale") base.init_scale = value.get<double>();
    else throw ConfigError("unknown model key '" + key + "'");
  }
  if (base.dropout < 0 || base.dropout >= 1) throw ConfigError("model.dropout must lie in [0, 1)");
  if (base.hidden == 0 || base.embed_dim == 0 || base.selector_hidden == 0 ||
      base.target_hidden == 0 || base.target_embed_dim == 0)
    throw ConfigError("model sizes must be positive");
  return base;
}

}  // namespace selectgen
