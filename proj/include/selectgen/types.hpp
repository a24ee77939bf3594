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

// Domain value types shared by the model, data and training layers.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace selectgen {

using TokenId = std::uint32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kBosId = 1;
inline constexpr TokenId kEosId = 2;
inline constexpr TokenId kUnkId = 3;
inline constexpr std::size_t kNumReserved = 4;

// Padding and end-of-sequence never carry content; their selection
// probability is pinned to this value.
inline constexpr double kReservedProb = 1.0 - 1e-7;
// Selector logits are clamped to [-kLogitClamp, kLogitClamp].
inline constexpr double kLogitClamp = 16.0;

inline bool is_unselectable(TokenId id) { return id == kPadId || id == kEosId; }

// Token ids plus their surface strings. A source X has no terminator; a
// target scored by the decoder ends in kEosId.
struct Sequence {
  std::vector<TokenId> ids;
  std::vector<std::string> surface;

  std::size_t size() const noexcept { return ids.size(); }
  bool empty() const noexcept { return ids.empty(); }
  friend bool operator==(const Sequence&, const Sequence&) = default;
};

enum class SelectorRole : std::uint8_t { kPrior, kPosterior };

// Factorised Bernoulli over source positions.
struct BernoulliVector {
  std::vector<double> probs;
  SelectorRole role = SelectorRole::kPrior;

  std::size_t size() const noexcept { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }
};

struct SelectionMask {
  std::vector<std::uint8_t> bits;

  SelectionMask() = default;
  explicit SelectionMask(std::vector<std::uint8_t> b) : bits(std::move(b)) {}

  static SelectionMask ones(std::size_t n) { return SelectionMask(std::vector<std::uint8_t>(n, 1)); }
  static SelectionMask zeros(std::size_t n) { return SelectionMask(std::vector<std::uint8_t>(n, 0)); }
  static SelectionMask one_hot(std::size_t n, std::size_t j) {
    SelectionMask m = zeros(n);
    m.bits.at(j) = 1;
    return m;
  }

  // Parses "0110"; any other character is rejected.
  static SelectionMask parse(std::string_view text) {
    SelectionMask m;
    for (char c : text) {
      if (c != '0' && c != '1')
        throw std::invalid_argument("mask bit-string may contain only 0 and 1");
      m.bits.push_back(c == '1');
    }
    return m;
  }

  std::size_t size() const noexcept { return bits.size(); }
  std::size_t count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
  }
  bool any() const { return count() > 0; }
  std::string str() const {
    std::string s;
    s.reserve(bits.size());
    for (auto b : bits) s.push_back(b ? '1' : '0');
    return s;
  }
  std::vector<double> as_weights() const { return {bits.begin(), bits.end()}; }

  friend bool operator==(const SelectionMask&, const SelectionMask&) = default;
  friend auto operator<=>(const SelectionMask&, const SelectionMask&) = default;
};

}  // namespace selectgen
