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

// Run configuration document for the command-line tools. Every key is
// validated before work starts and unknown keys are rejected.

#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "selectgen/core/errors.hpp"
#include "selectgen/core/rng.hpp"
#include "selectgen/data/corpus.hpp"
#include "selectgen/data/grammar.hpp"
#include "selectgen/data/vocabulary.hpp"
#include "selectgen/eval/battery.hpp"
#include "selectgen/model/config.hpp"
#include "selectgen/train/config.hpp"

namespace selectgen {

struct SyntheticCorpusConfig {
  std::size_t train_size = 2000;
  std::size_t valid_size = 200;
  std::size_t test_size = 200;
  std::uint64_t seed = 1;
};

struct CorpusConfig {
  std::optional<SyntheticCorpusConfig> synthetic;
  std::string train_path, valid_path, test_path;
  std::vector<std::string> stopwords;  // file corpora without a grammar only
};

struct EvalConfig {
  eval::BatteryConfig battery;
  std::size_t max_examples = 0;  // 0: the whole test split
};

struct RunConfig {
  std::optional<CorpusConfig> corpus;
  std::string grammar_path;  // empty: the built-in grammar
  std::string checkpoint;
  std::string metrics_log;
  std::string report;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
};

namespace detail {

inline const nlohmann::json& require_object(const nlohmann::json& v, const std::string& key) {
  if (!v.is_object()) throw ConfigError("config key '" + key + "' must be an object");
  return v;
}

inline std::string get_string(const nlohmann::json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError("config key '" + key + "' must be a string");
  return v.get<std::string>();
}

inline SyntheticCorpusConfig synthetic_from_json(const nlohmann::json& j) {
  require_object(j, "corpus.synthetic");
  SyntheticCorpusConfig s;
  for (const auto& [key, v] : j.items()) {
    const std::string k = "corpus.synthetic." + key;
    if (key == "train_size") s.train_size = config_get<std::size_t>(v, k);
    else if (key == "valid_size") s.valid_size = config_get<std::size_t>(v, k);
    else if (key == "test_size") s.test_size = config_get<std::size_t>(v, k);
    else if (key == "seed") s.seed = config_get<std::uint64_t>(v, k);
    else throw ConfigError("unknown config key '" + k + "'");
  }
  if (s.train_size == 0) throw ConfigError("corpus.synthetic.train_size must be at least 1");
  return s;
}

inline CorpusConfig corpus_from_json(const nlohmann::json& j) {
  require_object(j, "corpus");
  CorpusConfig c;
  for (const auto& [key, v] : j.items()) {
    const std::string k = "corpus." + key;
    if (key == "synthetic") c.synthetic = synthetic_from_json(v);
    else if (key == "train") c.train_path = get_string(v, k);
    else if (key == "valid") c.valid_path = get_string(v, k);
    else if (key == "test") c.test_path = get_string(v, k);
    else if (key == "stopwords") c.stopwords = config_get<std::vector<std::string>>(v, k);
    else throw ConfigError("unknown config key '" + k + "'");
  }
  if (c.synthetic && (!c.train_path.empty() || !c.valid_path.empty() || !c.test_path.empty()))
    throw ConfigError("corpus: give either 'synthetic' or file paths, not both");
  return c;
}

inline EvalConfig eval_from_json(const nlohmann::json& j) {
  require_object(j, "eval");
  EvalConfig e;
  for (const auto& [key, v] : j.items()) {
    const std::string k = "eval." + key;
    if (key == "masks") e.battery.masks = config_get<std::size_t>(v, k);
    else if (key == "samples") e.battery.samples = config_get<std::size_t>(v, k);
    else if (key == "temperature") e.battery.temperature = config_get<double>(v, k);
    else if (key == "seed") e.battery.seed = config_get<std::uint64_t>(v, k);
    else if (key == "exact_nll") e.battery.exact_nll = config_get<bool>(v, k);
    else if (key == "max_examples") e.max_examples = config_get<std::size_t>(v, k);
    else throw ConfigError("unknown config key '" + k + "'");
  }
  if (e.battery.masks < 2) throw ConfigError("eval.masks must be at least 2");
  if (!(e.battery.temperature > 0)) throw ConfigError("eval.temperature must be positive");
  return e;
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig rc;
  for (const auto& [key, v] : j.items()) {
    if (key == "corpus") rc.corpus = detail::corpus_from_json(v);
    else if (key == "grammar") rc.grammar_path = detail::get_string(v, key);
    else if (key == "checkpoint") rc.checkpoint = detail::get_string(v, key);
    else if (key == "metrics_log") rc.metrics_log = detail::get_string(v, key);
    else if (key == "report") rc.report = detail::get_string(v, key);
    else if (key == "model") rc.model = model_config_from_json(detail::require_object(v, key));
    else if (key == "strategy") rc.train.strategy = strategy_from_json(detail::require_object(v, key));
    else if (key == "optimizer") rc.train.optimizer = optimizer_from_json(detail::require_object(v, key));
    else if (key == "schedule") rc.train.schedule = schedule_from_json(detail::require_object(v, key));
    else if (key == "seed") rc.train.seed = detail::config_get<std::uint64_t>(v, key);
    else if (key == "eval") rc.eval = detail::eval_from_json(v);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  return rc;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

inline void require_key(bool present, const char* key) {
  if (!present) throw ConfigError(std::string("missing required config key '") + key + "'");
}

// Train / valid / test splits plus the vocabulary they were encoded with.
struct LoadedCorpus {
  data::Vocabulary vocab;
  data::Corpus train, valid, test;
};

inline data::Grammar load_grammar(const std::string& path) {
  if (path.empty()) return data::default_grammar();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read grammar file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  data::Grammar g = data::grammar_from_json(nlohmann::json::parse(ss.str()));
  data::validate(g);
  return g;
}

// Uses `vocab` when given (evaluation against a checkpoint); otherwise the
// vocabulary comes from the grammar, or from the training file.
inline LoadedCorpus load_run_corpus(const RunConfig& rc, const data::Vocabulary* vocab = nullptr) {
  require_key(rc.corpus.has_value(), "corpus");
  const CorpusConfig& c = *rc.corpus;
  const data::LengthLimits limits{rc.model.max_source_len, rc.model.max_target_len};
  LoadedCorpus out;
  if (c.synthetic) {
    const data::Grammar g = load_grammar(rc.grammar_path);
    out.vocab = vocab ? *vocab : data::build_vocabulary(g);
    const auto& s = *c.synthetic;
    out.train = data::generate_corpus(g, out.vocab, s.train_size, derive_seed(s.seed, 0));
    out.valid = data::generate_corpus(g, out.vocab, s.valid_size, derive_seed(s.seed, 1));
    out.test = data::generate_corpus(g, out.vocab, s.test_size, derive_seed(s.seed, 2));
    return out;
  }
  if (vocab) {
    out.vocab = *vocab;
  } else if (!rc.grammar_path.empty()) {
    out.vocab = data::build_vocabulary(load_grammar(rc.grammar_path));
  } else {
    require_key(!c.train_path.empty(), "corpus.train");
    out.vocab = data::vocabulary_from_corpus(c.train_path, c.stopwords);
  }
  if (!c.train_path.empty()) out.train = data::load_corpus(c.train_path, out.vocab, limits);
  if (!c.valid_path.empty()) out.valid = data::load_corpus(c.valid_path, out.vocab, limits);
  if (!c.test_path.empty()) out.test = data::load_corpus(c.test_path, out.vocab, limits);
  return out;
}

}  // namespace selectgen
