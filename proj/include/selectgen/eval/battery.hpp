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

// The sampling battery: per test example, prior masks with their greedy
// decodes, a fixed mask with temperature samples, best-select decodes from
// the prior and the posterior, and the held-out bound. Results depend only
// on (model, example, seed, index), never on the thread count.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "selectgen/core/rng.hpp"
#include "selectgen/data/corpus.hpp"
#include "selectgen/data/vocabulary.hpp"
#include "selectgen/eval/metrics.hpp"
#include "selectgen/model/inference.hpp"
#include "selectgen/model/model.hpp"
#include "selectgen/train/enumeration.hpp"
#include "selectgen/train/objectives.hpp"

namespace selectgen::eval {

struct BatteryConfig {
  std::size_t masks = 50;    // sampled prior masks per example
  std::size_t samples = 10;  // temperature samples under one fixed mask
  double temperature = 1.0;
  std::uint64_t seed = 0;
  bool exact_nll = false;  // also enumerate the bound where n <= 14
  std::size_t threads = 0;  // 0: hardware concurrency capped by SELECTGEN_THREADS
};

enum class Metric { kRouge1, kRouge2, kRougeL, kBleu4 };

inline double score(Metric m, const std::vector<TokenId>& cand, const std::vector<TokenId>& ref) {
  switch (m) {
    case Metric::kRouge1:
      return rouge(cand, ref, RougeVariant::k1);
    case Metric::kRouge2:
      return rouge(cand, ref, RougeVariant::k2);
    case Metric::kRougeL:
      return rouge(cand, ref, RougeVariant::kL);
    case Metric::kBleu4:
      return bleu(cand, ref, 4);
  }
  return 0.0;
}

struct QualityScores {
  double rouge1 = 0, rouge2 = 0, rougeL = 0, bleu4 = 0;

  static QualityScores of(const std::vector<TokenId>& cand, const std::vector<TokenId>& ref) {
    return {score(Metric::kRouge1, cand, ref), score(Metric::kRouge2, cand, ref),
            score(Metric::kRougeL, cand, ref), score(Metric::kBleu4, cand, ref)};
  }
  QualityScores& operator+=(const QualityScores& o) {
    rouge1 += o.rouge1;
    rouge2 += o.rouge2;
    rougeL += o.rougeL;
    bleu4 += o.bleu4;
    return *this;
  }
  QualityScores scaled(double s) const { return {rouge1 * s, rouge2 * s, rougeL * s, bleu4 * s}; }
};

struct DiversityReport {
  double unique_masks = 0;        // distinct masks / K
  double unique_generations = 0;  // distinct texts / K
  double effect = 0;              // min(1, distinct texts / distinct masks)
};

// K masks from the prior, each decoded greedily.
struct MaskSamples {
  std::vector<SelectionMask> masks;
  std::vector<std::vector<TokenId>> texts;
};

inline MaskSamples sample_prior_decodes(const SelectionModel& model, const Sequence& x,
                                        std::size_t k, Rng& rng) {
  const BernoulliVector gamma = prior(model, x);
  MaskSamples out;
  for (std::size_t i = 0; i < k; ++i) {
    out.masks.push_back(sample_mask(gamma, rng));
    out.texts.push_back(greedy_decode(model, x, out.masks.back()).ids);
  }
  return out;
}

inline DiversityReport diversity_of(const MaskSamples& s) {
  if (s.masks.empty()) return {};
  const std::set<SelectionMask> masks(s.masks.begin(), s.masks.end());
  const std::set<std::vector<TokenId>> texts(s.texts.begin(), s.texts.end());
  const double k = static_cast<double>(s.masks.size());
  DiversityReport d;
  d.unique_masks = static_cast<double>(masks.size()) / k;
  d.unique_generations = static_cast<double>(texts.size()) / k;
  d.effect = std::min(1.0, static_cast<double>(texts.size()) / static_cast<double>(masks.size()));
  return d;
}

inline std::vector<TokenId> reference_ids(const Sequence& target) {
  std::vector<TokenId> ref = target.ids;
  if (!ref.empty() && ref.back() == kEosId) ref.pop_back();
  return ref;
}

inline double oracle_of(const std::vector<std::vector<TokenId>>& cands,
                        const std::vector<TokenId>& ref, Metric m) {
  double best = 0.0;
  for (const auto& c : cands) best = std::max(best, score(m, c, ref));
  return best;
}

inline double mean_of(const std::vector<std::vector<TokenId>>& cands,
                      const std::vector<TokenId>& ref, Metric m) {
  if (cands.empty()) return 0.0;
  double s = 0.0, lo = 1.0, hi = 0.0;
  for (const auto& c : cands) {
    const double v = score(m, c, ref);
    s += v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  // Rounding in the sum can leave the quotient a few ulps outside [lo, hi].
  return std::clamp(s / static_cast<double>(cands.size()), lo, hi);
}

// Fraction of content (non-stopword) tokens where two masks agree.
inline double content_agreement(const SelectionMask& a, const SelectionMask& b, const Sequence& x,
                                const data::Vocabulary& vocab) {
  std::size_t agree = 0, total = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x.ids[i] < kNumReserved || vocab.is_stopword(x.ids[i])) continue;
    ++total;
    agree += a.bits[i] == b.bits[i];
  }
  return total ? static_cast<double>(agree) / static_cast<double>(total) : 1.0;
}

struct ExampleResult {
  std::size_t index = 0;
  DiversityReport diversity;
  double sampled_rouge1_mean = 0;
  QualityScores oracle;
  double self_bleu1 = 0;
  double entropy = 0;
  double selecting_ratio = 0;
  double nll_bound = 0;
  std::optional<double> nll_bound_exact;
  QualityScores pri, post;
  SelectionMask pri_mask, post_mask;
  std::vector<TokenId> pri_text, post_text;
  std::optional<double> post_mask_accuracy;  // against the gold mask
  std::optional<double> pri_mask_accuracy;
};

inline ExampleResult evaluate_example(const SelectionModel& model, const data::Vocabulary& vocab,
                                      const data::Example& ex, std::size_t index,
                                      const BatteryConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, index));
  ExampleResult r;
  r.index = index;
  const std::vector<TokenId> ref = reference_ids(ex.target);
  const BernoulliVector gamma = prior(model, ex.source);
  r.entropy = selector_entropy(gamma, ex.source.ids);
  for (double g : gamma.probs) r.selecting_ratio += g;
  r.selecting_ratio /= static_cast<double>(gamma.size());

  const MaskSamples ms = sample_prior_decodes(model, ex.source, cfg.masks, rng);
  r.diversity = diversity_of(ms);
  r.sampled_rouge1_mean = mean_of(ms.texts, ref, Metric::kRouge1);
  r.oracle = {oracle_of(ms.texts, ref, Metric::kRouge1), oracle_of(ms.texts, ref, Metric::kRouge2),
              oracle_of(ms.texts, ref, Metric::kRougeL), oracle_of(ms.texts, ref, Metric::kBleu4)};

  if (cfg.samples >= 2 && !ms.masks.empty()) {
    DecodeOptions opts;
    opts.mode = DecodeMode::kSample;
    opts.samples = cfg.samples;
    opts.temperature = cfg.temperature;
    std::vector<std::vector<TokenId>> texts;
    for (const Generation& g : generate(model, ex.source, ms.masks.front(), opts, &rng))
      texts.push_back(g.ids);
    r.self_bleu1 = self_bleu(texts);
  }

  r.nll_bound = elbo(model, ex.source, ex.target, rng).total;
  if (cfg.exact_nll && ex.source.size() <= kMaxEnumerationLength)
    r.nll_bound_exact = exact_elbo(model, ex.source, ex.target).total;

  r.pri_mask = best_select(gamma);
  r.pri_text = greedy_decode(model, ex.source, r.pri_mask).ids;
  r.pri = QualityScores::of(r.pri_text, ref);
  r.post_mask = best_select(posterior(model, ex.source, ex.target));
  r.post_text = greedy_decode(model, ex.source, r.post_mask).ids;
  r.post = QualityScores::of(r.post_text, ref);
  if (ex.gold.size() == ex.source.size()) {
    r.post_mask_accuracy = content_agreement(r.post_mask, ex.gold, ex.source, vocab);
    r.pri_mask_accuracy = content_agreement(r.pri_mask, ex.gold, ex.source, vocab);
  }
  return r;
}

inline std::size_t evaluation_threads(std::size_t requested) {
  std::size_t n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SELECTGEN_THREADS")) {
    char* end = nullptr;
    const unsigned long cap = std::strtoul(env, &end, 10);
    if (end != env && cap > 0) n = std::min<std::size_t>(n, cap);
  }
  return std::max<std::size_t>(n, 1);
}

// Runs evaluate_example over the set; slot i always holds example i.
inline std::vector<ExampleResult> run_battery(const SelectionModel& model,
                                              const data::Vocabulary& vocab,
                                              const data::Corpus& set, const BatteryConfig& cfg) {
  std::vector<ExampleResult> out(set.size());
  const std::size_t threads = std::min(evaluation_threads(cfg.threads), std::max<std::size_t>(set.size(), 1));
  if (threads <= 1) {
    for (std::size_t i = 0; i < set.size(); ++i) out[i] = evaluate_example(model, vocab, set[i], i, cfg);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < set.size(); i += threads)
          out[i] = evaluate_example(model, vocab, set[i], i, cfg);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

// Set-level summaries used on their own by tests and tools.

inline DiversityReport diversity_report(const SelectionModel& model, const data::Corpus& set,
                                        std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("diversity_report needs K >= 2");
  DiversityReport total;
  for (std::size_t i = 0; i < set.size(); ++i) {
    Rng rng(derive_seed(seed, i));
    const DiversityReport d = diversity_of(sample_prior_decodes(model, set[i].source, k, rng));
    total.unique_masks += d.unique_masks;
    total.unique_generations += d.unique_generations;
    total.effect += d.effect;
  }
  const double inv = set.empty() ? 0.0 : 1.0 / static_cast<double>(set.size());
  return {total.unique_masks * inv, total.unique_generations * inv, total.effect * inv};
}

inline double oracle_score(const SelectionModel& model, const data::Corpus& set, Metric metric,
                           std::size_t k, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("oracle_score needs K >= 1");
  double total = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    Rng rng(derive_seed(seed, i));
    const MaskSamples ms = sample_prior_decodes(model, set[i].source, k, rng);
    total += oracle_of(ms.texts, reference_ids(set[i].target), metric);
  }
  return set.empty() ? 0.0 : total / static_cast<double>(set.size());
}

// Mean negated bound in nats per sequence, sampled with a fixed seed or
// enumerated exactly.
inline double nll_bound(const SelectionModel& model, const data::Corpus& set, std::uint64_t seed,
                        bool exact = false) {
  double total = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (exact) {
      total += exact_elbo(model, set[i].source, set[i].target).total;
    } else {
      Rng rng(derive_seed(seed, i));
      total += elbo(model, set[i].source, set[i].target, rng).total;
    }
  }
  return set.empty() ? 0.0 : total / static_cast<double>(set.size());
}

}  // namespace selectgen::eval
