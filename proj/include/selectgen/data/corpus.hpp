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
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "selectgen/core/errors.hpp"
#include "selectgen/core/rng.hpp"
#include "selectgen/data/grammar.hpp"
#include "selectgen/data/tokenize.hpp"
#include "selectgen/data/vocabulary.hpp"
#include "selectgen/types.hpp"

namespace selectgen::data {

struct Example {
  Sequence source;                  // no terminator
  Sequence target;                  // ends with </s>
  std::vector<std::string> fields;  // field per source token, "" for filler
  SelectionMask gold;               // empty when no alignment is known
  int subset = -1;                  // generator subset index, -1 when unknown
  int paraphrase = -1;
};

using Corpus = std::vector<Example>;

struct LengthLimits {
  std::size_t max_source = 64;
  std::size_t max_target = 64;  // counted without the terminator
};

// One record per example: a value per field, a weighted random subset and a
// uniformly chosen paraphrase of it. Deterministic in (grammar, size, seed).
inline Corpus generate_corpus(const Grammar& g, const Vocabulary& vocab, std::size_t size,
                              std::uint64_t seed) {
  Rng rng(seed);
  const auto probs = g.subset_probabilities();
  Corpus out;
  out.reserve(size);
  for (std::size_t n = 0; n < size; ++n) {
    std::vector<std::vector<std::string>> values(g.fields.size());
    for (std::size_t f = 0; f < g.fields.size(); ++f)
      for (const auto& slot : g.fields[f].slots) values[f].push_back(slot[rng.below(slot.size())]);

    double u = rng.uniform();
    std::size_t si = 0;
    for (; si + 1 < probs.size(); ++si) {
      if (u < probs[si]) break;
      u -= probs[si];
    }
    const auto& subset = g.subsets[si];
    const std::size_t ti = rng.below(subset.templates.size());

    std::vector<bool> chosen(g.fields.size(), false);
    for (auto f : subset.fields) chosen[f] = true;

    Example ex;
    std::vector<std::string> src;
    for (std::size_t f = 0; f < g.fields.size(); ++f) {
      src.push_back(g.fields[f].label);
      ex.fields.emplace_back();
      ex.gold.bits.push_back(0);
      for (const auto& tok : values[f]) {
        src.push_back(tok);
        ex.fields.push_back(g.fields[f].name);
        ex.gold.bits.push_back(chosen[f] ? 1 : 0);
      }
    }
    std::vector<std::string> tgt;
    for (const auto& piece : detail::parse_template(subset.templates[ti])) {
      if (piece.placeholder) {
        for (const auto& tok : values[g.field_index(piece.text)]) tgt.push_back(tok);
      } else {
        tgt.push_back(piece.text);
      }
    }
    ex.source = vocab.encode(src);
    ex.target = vocab.encode_target(tgt);
    ex.subset = static_cast<int>(si);
    ex.paraphrase = static_cast<int>(ti);
    out.push_back(std::move(ex));
  }
  return out;
}

// Alignment tags: "_" filler, "+field" selected content, "-field" unselected.
inline std::string alignment_string(const Example& ex) {
  std::string out;
  for (std::size_t i = 0; i < ex.source.size(); ++i) {
    if (i) out.push_back(' ');
    if (ex.fields.empty() || ex.fields[i].empty()) {
      out += "_";
    } else {
      out += (ex.gold.bits[i] ? "+" : "-") + ex.fields[i];
    }
  }
  return out;
}

inline std::string target_text(const Example& ex) {
  std::vector<std::string> toks(ex.target.surface.begin(), ex.target.surface.end());
  if (!ex.target.ids.empty() && ex.target.ids.back() == kEosId) toks.pop_back();
  return detokenize(toks);
}

// UTF-8, one example per line: source TAB target [TAB alignment].
inline void write_corpus(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write corpus file '" + path + "'");
  for (const auto& ex : corpus) {
    out << detokenize(ex.source.surface) << '\t' << target_text(ex);
    if (!ex.gold.bits.empty()) out << '\t' << alignment_string(ex);
    out << '\n';
  }
}

inline Example parse_corpus_line(const std::string& line, std::size_t lineno,
                                 const Vocabulary& vocab, const LengthLimits& limits) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  if (cols.size() < 2 || cols.size() > 3)
    throw ParseError(lineno, "expected 2 or 3 tab-separated columns, found " +
                                 std::to_string(cols.size()));
  const auto src = tokenize(cols[0]);
  const auto tgt = tokenize(cols[1]);
  if (src.empty()) throw ParseError(lineno, "empty source");
  if (tgt.empty()) throw ParseError(lineno, "empty target");
  if (src.size() > limits.max_source)
    throw LengthExceeded("line " + std::to_string(lineno) + ": source length " +
                         std::to_string(src.size()) + " exceeds " + std::to_string(limits.max_source));
  if (tgt.size() > limits.max_target)
    throw LengthExceeded("line " + std::to_string(lineno) + ": target length " +
                         std::to_string(tgt.size()) + " exceeds " + std::to_string(limits.max_target));
  Example ex;
  ex.source = vocab.encode(src);
  ex.target = vocab.encode_target(tgt);
  if (cols.size() == 3) {
    std::istringstream tags(cols[2]);
    std::string tag;
    while (tags >> tag) {
      if (tag == "_") {
        ex.fields.emplace_back();
        ex.gold.bits.push_back(0);
      } else if ((tag[0] == '+' || tag[0] == '-') && tag.size() > 1) {
        ex.fields.push_back(tag.substr(1));
        ex.gold.bits.push_back(tag[0] == '+');
      } else {
        throw ParseError(lineno, "bad alignment tag '" + tag + "'");
      }
    }
    if (ex.fields.size() != src.size())
      throw ParseError(lineno, "alignment has " + std::to_string(ex.fields.size()) +
                                   " tags for " + std::to_string(src.size()) + " source tokens");
  }
  return ex;
}

inline Corpus load_corpus(std::istream& in, const Vocabulary& vocab, const LengthLimits& limits = {}) {
  Corpus out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out.push_back(parse_corpus_line(line, lineno, vocab, limits));
  }
  return out;
}

inline Corpus load_corpus(const std::string& path, const Vocabulary& vocab,
                          const LengthLimits& limits = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus file '" + path + "'");
  return load_corpus(in, vocab, limits);
}

// Vocabulary over every source and target token of a corpus file. Tokens in
// `stopwords` (and punctuation) are flagged as stopwords.
inline Vocabulary vocabulary_from_corpus(const std::string& path,
                                         const std::vector<std::string>& stopwords = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus file '" + path + "'");
  Vocabulary vocab;
  for (const auto& w : stopwords) vocab.add(fold_case(w), true);
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find('\t');
    if (first == std::string::npos) continue;
    const auto second = line.find('\t', first + 1);
    for (const auto& tok : tokenize(line.substr(0, first))) vocab.add(tok);
    for (const auto& tok : tokenize(line.substr(first + 1, second == std::string::npos ? std::string::npos
                                                                                          : second - first - 1)))
      vocab.add(tok);
  }
  return vocab;
}

}  // namespace selectgen::data
