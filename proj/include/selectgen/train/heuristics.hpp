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

// Distant-supervision labels extracted from a (source, target) pair.

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_set>

#include "selectgen/core/tensor.hpp"
#include "selectgen/data/vocabulary.hpp"
#include "selectgen/train/config.hpp"
#include "selectgen/types.hpp"

namespace selectgen {

namespace detail {

inline bool never_label(const data::Vocabulary& vocab, TokenId id) {
  return id < kNumReserved || vocab.is_stopword(id);
}

inline SelectionMask force_first_content(const data::Vocabulary& vocab, const Sequence& x,
                                         SelectionMask m) {
  if (m.any()) return m;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!never_label(vocab, x.ids[i])) {
      m.bits[i] = 1;
      return m;
    }
  m.bits[0] = 1;
  return m;
}

inline double cosine(const Tensor& table, TokenId a, TokenId b) {
  const std::size_t d = table.cols();
  const double* u = table.data() + a * d;
  const double* v = table.data() + b * d;
  double uv = 0, uu = 0, vv = 0;
  for (std::size_t k = 0; k < d; ++k) {
    uv += u[k] * v[k];
    uu += u[k] * u[k];
    vv += v[k] * v[k];
  }
  if (uu == 0 || vv == 0) return 0.0;
  return uv / std::sqrt(uu * vv);
}

}  // namespace detail

// Source tokens whose (case-folded) surface form occurs in the target.
inline SelectionMask overlap_labels(const Sequence& x, const Sequence& y,
                                    const data::Vocabulary& vocab) {
  std::unordered_set<std::string> in_target;
  for (std::size_t j = 0; j < y.size(); ++j) {
    if (y.ids[j] < kNumReserved) continue;
    in_target.insert(data::fold_case(j < y.surface.size() ? y.surface[j] : vocab.token(y.ids[j])));
  }
  SelectionMask m = SelectionMask::zeros(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (detail::never_label(vocab, x.ids[i])) continue;
    const std::string s = i < x.surface.size() ? x.surface[i] : vocab.token(x.ids[i]);
    m.bits[i] = in_target.count(data::fold_case(s)) > 0;
  }
  return m;
}

// For every content target token, the source content token with the highest
// cosine similarity under `embeddings` (rows indexed by token id).
inline SelectionMask nearest_labels(const Sequence& x, const Sequence& y,
                                    const data::Vocabulary& vocab, const Tensor& embeddings) {
  SelectionMask m = SelectionMask::zeros(x.size());
  for (TokenId yt : y.ids) {
    if (detail::never_label(vocab, yt)) continue;
    std::size_t best = x.size();
    double best_sim = -2.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (detail::never_label(vocab, x.ids[i])) continue;
      const double sim = detail::cosine(embeddings, x.ids[i], yt);
      if (sim > best_sim) {
        best_sim = sim;
        best = i;
      }
    }
    if (best < x.size()) m.bits[best] = 1;
  }
  return m;
}

// Stopwords and punctuation are never labelled; an empty result selects the
// first content token of the source.
inline SelectionMask heuristic_labels(const Sequence& x, const Sequence& y, HeuristicMode mode,
                                      const data::Vocabulary& vocab,
                                      const Tensor* embeddings = nullptr) {
  if (x.empty() || y.empty()) throw Error("heuristic_labels: empty sequence");
  SelectionMask m;
  if (mode == HeuristicMode::kOverlap) {
    m = overlap_labels(x, y, vocab);
  } else {
    if (!embeddings) throw Error("embedding-nearest labels need an embedding table");
    m = nearest_labels(x, y, vocab, *embeddings);
  }
  return detail::force_first_content(vocab, x, std::move(m));
}

}  // namespace selectgen
