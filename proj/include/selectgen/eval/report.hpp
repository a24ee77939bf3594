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

// Aggregates battery results into the versioned metric report document.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "selectgen/data/vocabulary.hpp"
#include "selectgen/eval/battery.hpp"
#include "selectgen/data/tokenize.hpp"

namespace selectgen::eval {

inline constexpr const char* kReportSchema = "selectgen-metric-report";
inline constexpr int kReportSchemaVersion = 1;

struct MetricReport {
  std::size_t examples = 0;
  DiversityReport diversity;
  double sampled_rouge1_mean = 0;
  QualityScores oracle;
  double self_bleu1 = 0;
  double entropy = 0;
  double selecting_ratio = 0;
  double nll_bound = 0;
  std::optional<double> nll_bound_exact;
  QualityScores pri, post;
  std::optional<double> pri_mask_accuracy, post_mask_accuracy;
  std::vector<ExampleResult> per_example;
};

inline MetricReport summarize(std::vector<ExampleResult> results) {
  MetricReport r;
  r.examples = results.size();
  if (results.empty()) return r;
  double exact = 0, post_acc = 0, pri_acc = 0;
  std::size_t n_exact = 0, n_acc = 0;
  for (const ExampleResult& e : results) {
    r.diversity.unique_masks += e.diversity.unique_masks;
    r.diversity.unique_generations += e.diversity.unique_generations;
    r.diversity.effect += e.diversity.effect;
    r.sampled_rouge1_mean += e.sampled_rouge1_mean;
    r.oracle += e.oracle;
    r.self_bleu1 += e.self_bleu1;
    r.entropy += e.entropy;
    r.selecting_ratio += e.selecting_ratio;
    r.nll_bound += e.nll_bound;
    r.pri += e.pri;
    r.post += e.post;
    if (e.nll_bound_exact) {
      exact += *e.nll_bound_exact;
      ++n_exact;
    }
    if (e.post_mask_accuracy) {
      post_acc += *e.post_mask_accuracy;
      pri_acc += *e.pri_mask_accuracy;
      ++n_acc;
    }
  }
  const double inv = 1.0 / static_cast<double>(results.size());
  r.diversity = {r.diversity.unique_masks * inv, r.diversity.unique_generations * inv,
                 r.diversity.effect * inv};
  r.sampled_rouge1_mean *= inv;
  r.oracle = r.oracle.scaled(inv);
  r.self_bleu1 *= inv;
  r.entropy *= inv;
  r.selecting_ratio *= inv;
  r.nll_bound *= inv;
  r.pri = r.pri.scaled(inv);
  r.post = r.post.scaled(inv);
  if (n_exact) r.nll_bound_exact = exact / static_cast<double>(n_exact);
  if (n_acc) {
    r.post_mask_accuracy = post_acc / static_cast<double>(n_acc);
    r.pri_mask_accuracy = pri_acc / static_cast<double>(n_acc);
  }
  r.per_example = std::move(results);
  return r;
}

inline nlohmann::json to_json(const QualityScores& q) {
  return {{"rouge1", q.rouge1}, {"rouge2", q.rouge2}, {"rougeL", q.rougeL}, {"bleu4", q.bleu4}};
}

inline nlohmann::json to_json(const MetricReport& r, const data::Vocabulary& vocab,
                              const nlohmann::json& header = nlohmann::json::object()) {
  nlohmann::json j = header;
  j["schema"] = kReportSchema;
  j["schema_version"] = kReportSchemaVersion;
  j["examples"] = r.examples;
  j["selector"] = {{"entropy", r.entropy}, {"selecting_ratio", r.selecting_ratio}};
  j["diversity"] = {{"unique_masks", r.diversity.unique_masks},
                    {"unique_generations", r.diversity.unique_generations},
                    {"effect", r.diversity.effect}};
  j["sampled"] = {{"rouge1_mean", r.sampled_rouge1_mean}, {"oracle", to_json(r.oracle)}};
  j["self_bleu1"] = r.self_bleu1;
  j["nll_bound"] = r.nll_bound;
  if (r.nll_bound_exact) j["nll_bound_exact"] = *r.nll_bound_exact;
  j["pri"] = to_json(r.pri);
  j["post"] = to_json(r.post);
  if (r.pri_mask_accuracy) {
    j["pri"]["mask_accuracy"] = *r.pri_mask_accuracy;
    j["post"]["mask_accuracy"] = *r.post_mask_accuracy;
  }
  nlohmann::json rows = nlohmann::json::array();
  for (const ExampleResult& e : r.per_example) {
    rows.push_back({{"index", e.index},
                    {"rouge1_mean", e.sampled_rouge1_mean},
                    {"rouge1_oracle", e.oracle.rouge1},
                    {"unique_masks", e.diversity.unique_masks},
                    {"unique_generations", e.diversity.unique_generations},
                    {"self_bleu1", e.self_bleu1},
                    {"pri_mask", e.pri_mask.str()},
                    {"pri_text", data::detokenize(vocab.decode(e.pri_text))},
                    {"post_mask", e.post_mask.str()},
                    {"post_text", data::detokenize(vocab.decode(e.post_text))}});
  }
  j["per_example"] = std::move(rows);
  return j;
}

}  // namespace selectgen::eval
