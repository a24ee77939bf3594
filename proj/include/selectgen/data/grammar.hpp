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

// Declarative record-to-text grammar: fields with closed lexicons, and the
// field subsets a reference may realise, each with paraphrase templates.

#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "selectgen/core/errors.hpp"
#include "selectgen/data/tokenize.hpp"
#include "selectgen/data/vocabulary.hpp"

namespace selectgen::data {

struct FieldSpec {
  std::string name;
  std::string label;                            // filler token in the source
  std::vector<std::vector<std::string>> slots;  // one token drawn per slot
};

struct SubsetSpec {
  std::vector<std::size_t> fields;  // indices into Grammar::fields, ascending
  double weight = 1.0;
  std::vector<std::string> templates;
};

struct Grammar {
  std::vector<FieldSpec> fields;
  std::vector<SubsetSpec> subsets;

  std::size_t field_index(std::string_view name) const {
    for (std::size_t i = 0; i < fields.size(); ++i)
      if (fields[i].name == name) return i;
    throw ConfigError("grammar: unknown field '" + std::string(name) + "'");
  }

  std::vector<double> subset_probabilities() const {
    double total = 0;
    for (const auto& s : subsets) total += s.weight;
    std::vector<double> p;
    for (const auto& s : subsets) p.push_back(s.weight / total);
    return p;
  }
};

namespace detail {

// Splits a template into literal tokens and "{field}" placeholders.
struct TemplatePiece {
  bool placeholder;
  std::string text;
};

inline std::vector<TemplatePiece> parse_template(std::string_view tmpl) {
  std::vector<TemplatePiece> out;
  std::string literal;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i);
      if (close == std::string_view::npos)
        throw ConfigError("grammar: unterminated placeholder in '" + std::string(tmpl) + "'");
      for (auto& tok : tokenize(literal)) out.push_back({false, tok});
      literal.clear();
      out.push_back({true, std::string(tmpl.substr(i + 1, close - i - 1))});
      i = close;
    } else {
      literal.push_back(tmpl[i]);
    }
  }
  for (auto& tok : tokenize(literal)) out.push_back({false, tok});
  return out;
}

}  // namespace detail

// Rejects grammars that would make gold alignments ambiguous.
inline void validate(const Grammar& g) {
  if (g.fields.empty()) throw ConfigError("grammar: no fields");
  if (g.subsets.empty()) throw ConfigError("grammar: no subsets");
  std::map<std::string, std::string> owner;
  auto claim = [&](const std::string& tok, const std::string& who) {
    auto [it, fresh] = owner.emplace(tok, who);
    if (!fresh && it->second != who)
      throw ConfigError("grammar: token '" + tok + "' used by both " + it->second + " and " + who);
  };
  for (const auto& f : g.fields) {
    if (f.slots.empty()) throw ConfigError("grammar: field '" + f.name + "' has no slots");
    claim(f.label, "labels");
    for (const auto& slot : f.slots) {
      if (slot.empty()) throw ConfigError("grammar: empty slot in field '" + f.name + "'");
      for (const auto& tok : slot) {
        if (tokenize(tok) != std::vector<std::string>{tok})
          throw ConfigError("grammar: lexicon entry '" + tok + "' is not a single token");
        claim(tok, "field " + f.name);
      }
    }
  }
  for (const auto& s : g.subsets) {
    if (!(s.weight > 0)) throw ConfigError("grammar: subset weight must be positive");
    if (s.templates.empty()) throw ConfigError("grammar: subset without templates");
    const std::set<std::size_t> want(s.fields.begin(), s.fields.end());
    for (const auto& t : s.templates) {
      std::multiset<std::size_t> seen;
      for (const auto& piece : detail::parse_template(t)) {
        if (piece.placeholder) {
          seen.insert(g.field_index(piece.text));
        } else {
          claim(piece.text, "templates");
        }
      }
      if (std::set<std::size_t>(seen.begin(), seen.end()) != want || seen.size() != want.size())
        throw ConfigError("grammar: template '" + t + "' must mention each subset field once");
    }
  }
}

inline Grammar grammar_from_json(const nlohmann::json& j) {
  Grammar g;
  for (const auto& jf : j.at("fields")) {
    FieldSpec f;
    f.name = jf.at("name").get<std::string>();
    f.label = jf.value("label", f.name);
    f.slots = jf.at("slots").get<std::vector<std::vector<std::string>>>();
    g.fields.push_back(std::move(f));
  }
  for (const auto& js : j.at("subsets")) {
    SubsetSpec s;
    for (const auto& name : js.at("fields")) s.fields.push_back(g.field_index(name.get<std::string>()));
    std::sort(s.fields.begin(), s.fields.end());
    s.weight = js.value("weight", 1.0);
    s.templates = js.at("templates").get<std::vector<std::string>>();
    g.subsets.push_back(std::move(s));
  }
  validate(g);
  return g;
}

inline nlohmann::json grammar_to_json(const Grammar& g) {
  nlohmann::json fields = nlohmann::json::array();
  for (const auto& f : g.fields)
    fields.push_back({{"name", f.name}, {"label", f.label}, {"slots", f.slots}});
  nlohmann::json subsets = nlohmann::json::array();
  for (const auto& s : g.subsets) {
    std::vector<std::string> names;
    for (auto i : s.fields) names.push_back(g.fields[i].name);
    subsets.push_back({{"fields", names}, {"weight", s.weight}, {"templates", s.templates}});
  }
  return {{"version", 1}, {"fields", fields}, {"subsets", subsets}};
}

// Labels, template words and punctuation are stopwords; lexicon tokens are
// content. Insertion order is deterministic.
inline Vocabulary build_vocabulary(const Grammar& g) {
  Vocabulary v;
  for (const auto& f : g.fields) v.add(f.label, true);
  for (const auto& f : g.fields)
    for (const auto& slot : f.slots)
      for (const auto& tok : slot) v.add(tok, false);
  for (const auto& s : g.subsets)
    for (const auto& t : s.templates)
      for (const auto& piece : detail::parse_template(t))
        if (!piece.placeholder) v.add(piece.text, true);
  return v;
}

// Five fields, nine permitted subsets with skewed weights, 2-3 paraphrases
// each. About 200 tokens.
inline const char* default_grammar_json() {
  return R"json({
  "version": 1,
  "fields": [
    {"name": "name", "label": "name", "slots": [
      ["alice","bruno","carla","dmitri","elena","farid","greta","hiro","ines","jonas","kemal","lucia","marek","nadia","oscar","priya","quentin","rosa","stefan","tamar","umar","vera","wanda","yusuf"],
      ["adler","brandt","costa","duval","eriksen","fontaine","garcia","holm","iwata","jansen","kowalski","lindqvist","moreau","novak","okafor","petrov","quist","rossi","svoboda","tanaka","ueda","varga","weber","zeman"]]},
    {"name": "date", "label": "date", "slots": [
      ["january","february","march","april","may","june","july","august","september","october","november","december"],
      ["1st","2nd","3rd","4th","5th","6th","7th","8th","9th","10th","11th","12th","13th","14th","15th","16th","17th","18th","19th","20th"]]},
    {"name": "place", "label": "place", "slots": [
      ["paris","lisbon","oslo","berlin","madrid","vienna","prague","dublin","warsaw","athens","rome","helsinki","zurich","munich","lyon","porto","krakow","seville","bergen","geneva","milan","bruges","tallinn","riga","split","graz","bologna","ghent","malmo","turin"]]},
    {"name": "event", "label": "event", "slots": [
      ["concert","festival","marathon","conference","exhibition","hackathon","premiere","tournament","regatta","gala","symposium","fair","carnival","workshop","parade","auction","recital","rally","summit","derby","expo","banquet","ceremony","bazaar"]]},
    {"name": "quantity", "label": "quantity", "slots": [
      ["40","60","80","120","150","200","250","300","350","400","450","500","600","700","800","900","1000","1200","1500","2000","30","70","90","1300","550","650","750","850","950","1100"]]}
  ],
  "subsets": [
    {"fields": ["name","event"], "weight": 0.22, "templates": [
      "{name} attended the {event} .",
      "{name} went to the {event} .",
      "{name} was at the {event} ."]},
    {"fields": ["name","event","date"], "weight": 0.16, "templates": [
      "{name} attended the {event} on {date} .",
      "on {date} , {name} went to the {event} .",
      "{name} was at the {event} on {date} ."]},
    {"fields": ["name","event","place"], "weight": 0.14, "templates": [
      "{name} attended the {event} in {place} .",
      "{name} went to the {event} held in {place} .",
      "in {place} , {name} was at the {event} ."]},
    {"fields": ["name","event","date","place"], "weight": 0.10, "templates": [
      "{name} attended the {event} in {place} on {date} .",
      "on {date} , {name} went to the {event} in {place} ."]},
    {"fields": ["name","event","quantity"], "weight": 0.08, "templates": [
      "{name} and {quantity} others attended the {event} .",
      "{name} joined {quantity} people at the {event} ."]},
    {"fields": ["event","place","quantity"], "weight": 0.08, "templates": [
      "{quantity} people attended the {event} in {place} .",
      "the {event} in {place} drew {quantity} people .",
      "{quantity} visitors came to the {event} in {place} ."]},
    {"fields": ["name","place"], "weight": 0.10, "templates": [
      "{name} lives in {place} .",
      "{name} is based in {place} .",
      "{name} comes from {place} ."]},
    {"fields": ["event","date"], "weight": 0.06, "templates": [
      "the {event} happened on {date} .",
      "the {event} was held on {date} ."]},
    {"fields": ["name","date","place","event","quantity"], "weight": 0.06, "templates": [
      "on {date} , {name} and {quantity} others attended the {event} in {place} .",
      "{name} joined {quantity} people at the {event} in {place} on {date} ."]}
  ]
})json";
}

inline Grammar default_grammar() {
  return grammar_from_json(nlohmann::json::parse(default_grammar_json()));
}

}  // namespace selectgen::data
