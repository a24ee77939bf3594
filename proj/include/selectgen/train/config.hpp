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

// Training strategy, optimiser and schedule settings with JSON round-trip.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "selectgen/core/errors.hpp"

namespace selectgen {

enum class StrategyKind { kBottomUp, kSoftSelect, kReinforceSelect, kVariational };

inline const char* strategy_name(StrategyKind k) {
  switch (k) {
    case StrategyKind::kBottomUp:
      return "bottom_up";
    case StrategyKind::kSoftSelect:
      return "soft_select";
    case StrategyKind::kReinforceSelect:
      return "reinforce_select";
    case StrategyKind::kVariational:
      return "vrs";
  }
  return "?";
}

inline StrategyKind strategy_from_name(const std::string& s) {
  if (s == "bottom_up") return StrategyKind::kBottomUp;
  if (s == "soft_select") return StrategyKind::kSoftSelect;
  if (s == "reinforce_select") return StrategyKind::kReinforceSelect;
  if (s == "vrs") return StrategyKind::kVariational;
  throw ConfigError("strategy.kind must be one of bottom_up, soft_select, reinforce_select, vrs (got '" +
                    s + "')");
}

enum class HeuristicMode { kOverlap, kEmbeddingNearest };

struct OptimizerConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1.2e-6;
  double clip = 5.0;  // elementwise, before weight decay
};

struct StrategyConfig {
  StrategyKind kind = StrategyKind::kVariational;
  double alpha = 0.35;   // target selecting ratio
  double lambda = 1.0;   // penalty weight
  double epsilon_coef = 0.15;  // KL target per source token
  std::optional<double> epsilon_abs;  // overrides epsilon_coef when set
  bool control_variate = true;
  // Also fit the prior network to the heuristic labels while pretraining.
  bool supervise_prior_in_pretrain = false;
  HeuristicMode heuristic = HeuristicMode::kOverlap;

  double epsilon_for(std::size_t n) const {
    return epsilon_abs ? *epsilon_abs : epsilon_coef * static_cast<double>(n);
  }
  bool has_pretrain() const {
    return kind == StrategyKind::kReinforceSelect || kind == StrategyKind::kVariational;
  }
};

struct ScheduleConfig {
  std::size_t max_steps = 2000;
  std::size_t batch_size = 8;
  std::size_t eval_every = 100;  // steps between held-out evaluations
  std::size_t eval_examples = 64;
  std::size_t pretrain_patience = 3;
  std::size_t pretrain_max_steps = 1000;
  std::uint64_t eval_seed = 0x5eed;
  bool log_wall_time = false;
};

struct TrainConfig {
  StrategyConfig strategy;
  OptimizerConfig optimizer;
  ScheduleConfig schedule;
  std::uint64_t seed = 1;
};

inline nlohmann::json to_json(const StrategyConfig& s) {
  nlohmann::json j{{"kind", strategy_name(s.kind)},
                   {"alpha", s.alpha},
                   {"lambda", s.lambda},
                   {"epsilon_coef", s.epsilon_coef},
                   {"control_variate", s.control_variate},
                   {"supervise_prior_in_pretrain", s.supervise_prior_in_pretrain},
                   {"heuristic", s.heuristic == HeuristicMode::kOverlap ? "overlap" : "embedding_nearest"}};
  if (s.epsilon_abs) j["epsilon_abs"] = *s.epsilon_abs;
  return j;
}

inline nlohmann::json to_json(const OptimizerConfig& o) {
  return {{"learning_rate", o.learning_rate}, {"beta1", o.beta1},
          {"beta2", o.beta2},                 {"eps", o.eps},
          {"weight_decay", o.weight_decay},   {"clip", o.clip}};
}

inline nlohmann::json to_json(const ScheduleConfig& s) {
  return {{"max_steps", s.max_steps},
          {"batch_size", s.batch_size},
          {"eval_every", s.eval_every},
          {"eval_examples", s.eval_examples},
          {"pretrain_patience", s.pretrain_patience},
          {"pretrain_max_steps", s.pretrain_max_steps},
          {"eval_seed", s.eval_seed},
          {"log_wall_time", s.log_wall_time}};
}

namespace detail {

template <class T>
T config_get(const nlohmann::json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

}  // namespace detail

inline StrategyConfig strategy_from_json(const nlohmann::json& j, StrategyConfig s = {}) {
  using detail::config_get;
  for (const auto& [key, v] : j.items()) {
    const std::string k = "strategy." + key;
    if (key == "kind") s.kind = strategy_from_name(config_get<std::string>(v, k));
    else if (key == "alpha") s.alpha = config_get<double>(v, k);
    else if (key == "lambda") s.lambda = config_get<double>(v, k);
    else if (key == "epsilon_coef") s.epsilon_coef = config_get<double>(v, k);
    else if (key == "epsilon_abs") s.epsilon_abs = config_get<double>(v, k);
    else if (key == "control_variate") s.control_variate = config_get<bool>(v, k);
    else if (key == "supervise_prior_in_pretrain") s.supervise_prior_in_pretrain = config_get<bool>(v, k);
    else if (key == "heuristic") {
      const auto m = config_get<std::string>(v, k);
      if (m == "overlap") s.heuristic = HeuristicMode::kOverlap;
      else if (m == "embedding_nearest") s.heuristic = HeuristicMode::kEmbeddingNearest;
      else throw ConfigError("strategy.heuristic must be overlap or embedding_nearest");
    } else {
      throw ConfigError("unknown config key '" + k + "'");
    }
  }
  if (!(s.alpha > 0 && s.alpha <= 1)) throw ConfigError("strategy.alpha must lie in (0, 1]");
  if (!(s.lambda >= 0)) throw ConfigError("strategy.lambda must be non-negative");
  if (!(s.epsilon_coef >= 0) || (s.epsilon_abs && !(*s.epsilon_abs >= 0)))
    throw ConfigError("strategy epsilon must be non-negative");
  return s;
}

inline OptimizerConfig optimizer_from_json(const nlohmann::json& j, OptimizerConfig o = {}) {
  using detail::config_get;
  for (const auto& [key, v] : j.items()) {
    const std::string k = "optimizer." + key;
    if (key == "learning_rate") o.learning_rate = config_get<double>(v, k);
    else if (key == "beta1") o.beta1 = config_get<double>(v, k);
    else if (key == "beta2") o.beta2 = config_get<double>(v, k);
    else if (key == "eps") o.eps = config_get<double>(v, k);
    else if (key == "weight_decay") o.weight_decay = config_get<double>(v, k);
    else if (key == "clip") o.clip = config_get<double>(v, k);
    else throw ConfigError("unknown config key '" + k + "'");
  }
  if (!(o.learning_rate > 0)) throw ConfigError("optimizer.learning_rate must be positive");
  if (!(o.clip > 0)) throw ConfigError("optimizer.clip must be positive");
  return o;
}

inline ScheduleConfig schedule_from_json(const nlohmann::json& j, ScheduleConfig s = {}) {
  using detail::config_get;
  for (const auto& [key, v] : j.items()) {
    const std::string k = "schedule." + key;
    if (key == "max_steps") s.max_steps = config_get<std::size_t>(v, k);
    else if (key == "batch_size") s.batch_size = config_get<std::size_t>(v, k);
    else if (key == "eval_every") s.eval_every = config_get<std::size_t>(v, k);
    else if (key == "eval_examples") s.eval_examples = config_get<std::size_t>(v, k);
    else if (key == "pretrain_patience") s.pretrain_patience = config_get<std::size_t>(v, k);
    else if (key == "pretrain_max_steps") s.pretrain_max_steps = config_get<std::size_t>(v, k);
    else if (key == "eval_seed") s.eval_seed = config_get<std::uint64_t>(v, k);
    else if (key == "log_wall_time") s.log_wall_time = config_get<bool>(v, k);
    else throw ConfigError("unknown config key '" + k + "'");
  }
  if (s.batch_size == 0) throw ConfigError("schedule.batch_size must be at least 1");
  if (s.eval_every == 0) throw ConfigError("schedule.eval_every must be at least 1");
  if (s.pretrain_patience == 0) throw ConfigError("schedule.pretrain_patience must be at least 1");
  return s;
}

}  // namespace selectgen
