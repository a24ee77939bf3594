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

// Token-level n-gram metrics and selector entropy.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <vector>

#include "selectgen/types.hpp"

namespace selectgen::eval {

namespace detail {

template <class T>
std::map<std::vector<T>, std::size_t> ngram_counts(const std::vector<T>& s, std::size_t n) {
  std::map<std::vector<T>, std::size_t> counts;
  if (s.size() < n) return counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++counts[std::vector<T>(s.begin() + i, s.begin() + i + n)];
  return counts;
}

template <class T>
std::size_t clipped_matches(const std::vector<T>& cand, const std::vector<T>& ref, std::size_t n) {
  const auto c = ngram_counts(cand, n);
  const auto r = ngram_counts(ref, n);
  std::size_t m = 0;
  for (const auto& [g, k] : c) {
    auto it = r.find(g);
    if (it != r.end()) m += std::min(k, it->second);
  }
  return m;
}

inline double f1(double matches, double cand_total, double ref_total) {
  if (matches <= 0 || cand_total <= 0 || ref_total <= 0) return 0.0;
  const double p = matches / cand_total, r = matches / ref_total;
  return 2 * p * r / (p + r);
}

template <class T>
std::size_t lcs_length(const std::vector<T>& a, const std::vector<T>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace detail

enum class RougeVariant { k1, k2, kL };

// F-score of ROUGE-1, ROUGE-2 or ROUGE-L between two token sequences.
template <class T>
double rouge(const std::vector<T>& cand, const std::vector<T>& ref, RougeVariant v) {
  if (ref.empty()) throw std::invalid_argument("rouge: empty reference");
  if (v == RougeVariant::kL) {
    return detail::f1(static_cast<double>(detail::lcs_length(cand, ref)),
                      static_cast<double>(cand.size()), static_cast<double>(ref.size()));
  }
  const std::size_t n = v == RougeVariant::k1 ? 1 : 2;
  const auto total = [n](std::size_t len) { return len >= n ? static_cast<double>(len - n + 1) : 0.0; };
  return detail::f1(static_cast<double>(detail::clipped_matches(cand, ref, n)), total(cand.size()),
                    total(ref.size()));
}

// Sentence BLEU: geometric mean of clipped n-gram precisions for n = 1..max_n
// times the brevity penalty. Orders n >= 2 use add-one smoothing.
template <class T>
double bleu(const std::vector<T>& cand, const std::vector<T>& ref, std::size_t max_n = 4) {
  if (max_n == 0) throw std::invalid_argument("bleu: max_n must be at least 1");
  if (cand.empty() || ref.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    const double total = cand.size() >= n ? static_cast<double>(cand.size() - n + 1) : 0.0;
    const double m = static_cast<double>(detail::clipped_matches(cand, ref, n));
    double p;
    if (n == 1) {
      if (m == 0) return 0.0;
      p = m / total;
    } else {
      p = (m + 1.0) / (total + 1.0);
    }
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(cand.size()), r = static_cast<double>(ref.size());
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / static_cast<double>(max_n));
}

// Mean BLEU-1 over ordered pairs (i, j), i != j, of sample i against j.
template <class T>
double self_bleu(const std::vector<std::vector<T>>& samples) {
  if (samples.size() < 2) throw std::invalid_argument("self_bleu needs at least two samples");
  double s = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t j = 0; j < samples.size(); ++j) {
      if (i == j) continue;
      s += bleu(samples[i], samples[j], 1);
      ++pairs;
    }
  return s / static_cast<double>(pairs);
}

inline double bernoulli_entropy(double p) {
  double h = 0.0;
  if (p > 0) h -= p * std::log(p);
  if (p < 1) h -= (1 - p) * std::log1p(-p);
  return h;
}

// Mean per-token Bernoulli entropy in nats.
inline double selector_entropy(const BernoulliVector& p) {
  if (p.size() == 0) return 0.0;
  double s = 0.0;
  for (double v : p.probs) s += bernoulli_entropy(v);
  return s / static_cast<double>(p.size());
}

// As above, skipping positions whose token can never be selected.
inline double selector_entropy(const BernoulliVector& p, const std::vector<TokenId>& ids) {
  double s = 0.0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i < ids.size() && is_unselectable(ids[i])) continue;
    s += bernoulli_entropy(p[i]);
    ++k;
  }
  return k ? s / static_cast<double>(k) : 0.0;
}

}  // namespace selectgen::eval
