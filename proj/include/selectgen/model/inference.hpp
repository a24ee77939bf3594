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

// Inference-time helpers over a frozen model: selector probabilities, mask
// sampling and thresholding, scoring, and greedy / beam / sampled decoding.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "selectgen/core/errors.hpp"
#include "selectgen/core/ops.hpp"
#include "selectgen/core/rng.hpp"
#include "selectgen/core/tape.hpp"
#include "selectgen/model/model.hpp"
#include "selectgen/types.hpp"

namespace selectgen {

inline BernoulliVector to_bernoulli(Var probs, SelectorRole role) {
  const auto v = probs.value().values();
  return BernoulliVector{{v.begin(), v.end()}, role};
}

inline BernoulliVector prior(const SelectionModel& model, const Sequence& x) {
  Tape t(&model.params(), false);
  return to_bernoulli(model.prior_probs(t, model.encode(t, x)), SelectorRole::kPrior);
}

inline BernoulliVector posterior(const SelectionModel& model, const Sequence& x,
                                 const Sequence& y) {
  Tape t(&model.params(), false);
  EncoderStates h = model.encode(t, x);
  return to_bernoulli(model.posterior_probs(t, h, model.encode_target(t, y)),
                      SelectorRole::kPosterior);
}

// Lowest index among the maximal probabilities.
inline std::size_t argmax_index(const std::vector<double>& p) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[best]) best = i;
  return best;
}

inline constexpr int kMaskResampleLimit = 16;

// Independent Bernoulli draws. An all-zero draw is redrawn up to
// kMaskResampleLimit times before the most probable token is forced on.
inline SelectionMask sample_mask(const BernoulliVector& p, Rng& rng) {
  const std::size_t n = p.size();
  if (n == 0) throw Error("sample_mask: empty probability vector");
  SelectionMask m = SelectionMask::zeros(n);
  for (int attempt = 0; attempt <= kMaskResampleLimit; ++attempt) {
    for (std::size_t i = 0; i < n; ++i) m.bits[i] = rng.bernoulli(p.probs[i]);
    if (m.any()) return m;
  }
  return SelectionMask::one_hot(n, argmax_index(p.probs));
}

// beta_i = [p_i > 0.5], with the most probable token forced on if nothing
// passes.
inline SelectionMask best_select(const BernoulliVector& p) {
  const std::size_t n = p.size();
  if (n == 0) throw Error("best_select: empty probability vector");
  SelectionMask m = SelectionMask::zeros(n);
  for (std::size_t i = 0; i < n; ++i) m.bits[i] = p.probs[i] > 0.5;
  if (!m.any()) m.bits[argmax_index(p.probs)] = 1;
  return m;
}

// log p(Y | X, beta) for a hard or soft mask; dropout off.
inline double log_likelihood(const SelectionModel& model, const Sequence& x, const Sequence& y,
                             const std::vector<double>& weights) {
  Tape t(&model.params(), false);
  EncoderStates h = model.encode(t, x);
  return model.log_likelihood(t, h, t.constant(weights), y).scalar();
}

inline double log_likelihood(const SelectionModel& model, const Sequence& x, const Sequence& y,
                             const SelectionMask& mask) {
  if (!mask.any()) throw AllMaskedError("log_likelihood");
  return log_likelihood(model, x, y, mask.as_weights());
}

enum class DecodeMode { kGreedy, kBeam, kSample };

struct DecodeOptions {
  DecodeMode mode = DecodeMode::kGreedy;
  std::size_t beam = 5;
  std::size_t samples = 1;
  double temperature = 1.0;
  std::size_t max_length = 0;  // 0: the model's max_target_len
};

// Generated token ids, without the terminating </s>, and the sum of
// per-token log-probabilities under the full output distribution (the
// terminator included when emitted).
struct Generation {
  std::vector<TokenId> ids;
  double log_prob = 0.0;
  bool finished = false;

  friend bool operator==(const Generation&, const Generation&) = default;
};

namespace detail {

struct Hypothesis {
  std::vector<TokenId> ids;
  double log_prob = 0.0;
  DecoderState state;
};

// Padding and the start symbol are never emitted.
inline bool is_emittable(std::size_t tok) { return tok != kPadId && tok != kBosId; }

inline std::size_t best_emittable(const std::vector<double>& logp) {
  std::size_t best = kEosId;
  for (std::size_t k = 0; k < logp.size(); ++k)
    if (is_emittable(k) && logp[k] > logp[best]) best = k;
  return best;
}

inline std::size_t sample_from_logits(std::span<const double> logits, double temperature,
                                      Rng& rng) {
  std::vector<double> scaled(logits.begin(), logits.end());
  for (std::size_t k = 0; k < scaled.size(); ++k)
    scaled[k] = is_emittable(k) ? scaled[k] / temperature : -std::numeric_limits<double>::infinity();
  const auto logp = log_softmax_values(scaled);
  const double u = rng.uniform();
  double cdf = 0.0;
  for (std::size_t k = 0; k < logp.size(); ++k) {
    cdf += std::exp(logp[k]);
    if (u < cdf) return k;
  }
  // Rounding left u above the accumulated mass; take the last supported id.
  std::size_t last = 0;
  for (std::size_t k = 0; k < logp.size(); ++k)
    if (std::exp(logp[k]) > 0) last = k;
  return last;
}

class Decoder {
 public:
  Decoder(const SelectionModel& model, const Sequence& x, const SelectionMask& mask)
      : model_(model), tape_(&model.params(), false) {
    if (mask.size() != x.size()) throw Error("mask length does not match source length");
    if (!mask.any()) throw AllMaskedError("generate");
    h_ = model.encode(tape_, x);
    mask_ = tape_.constant(mask.as_weights());
    init_ = model.init_decoder(tape_, h_, mask_);
  }

  const DecoderState& initial() const { return init_; }

  std::pair<std::vector<double>, DecoderState> step(const DecoderState& s, TokenId prev) {
    StepOutput out = model_.decode_step(tape_, s, prev, h_, mask_);
    return {log_softmax_values(out.logits.value().values()), out.state};
  }

  Generation greedy(std::size_t max_len) {
    Generation g;
    DecoderState s = init_;
    TokenId prev = kBosId;
    while (g.ids.size() < max_len) {
      auto [logp, next] = step(s, prev);
      const std::size_t tok = best_emittable(logp);
      g.log_prob += logp[tok];
      if (tok == kEosId) {
        g.finished = true;
        break;
      }
      g.ids.push_back(static_cast<TokenId>(tok));
      s = next;
      prev = static_cast<TokenId>(tok);
    }
    return g;
  }

  Generation sample(std::size_t max_len, double temperature, Rng& rng) {
    Generation g;
    DecoderState s = init_;
    TokenId prev = kBosId;
    while (g.ids.size() < max_len) {
      StepOutput out = model_.decode_step(tape_, s, prev, h_, mask_);
      const auto logits = out.logits.value().values();
      const std::size_t tok = sample_from_logits(logits, temperature, rng);
      g.log_prob += log_softmax_values(logits)[tok];
      if (tok == kEosId) {
        g.finished = true;
        break;
      }
      g.ids.push_back(static_cast<TokenId>(tok));
      s = out.state;
      prev = static_cast<TokenId>(tok);
    }
    return g;
  }

  // Beam search over summed log-probabilities. The greedy decode is entered
  // as a finished candidate, so the best result never scores below it.
  std::vector<Generation> beam(std::size_t k, std::size_t max_len) {
    std::vector<Generation> finished{greedy(max_len)};
    std::vector<Hypothesis> alive{Hypothesis{{}, 0.0, init_}};
    while (!alive.empty()) {
      double best_alive = -std::numeric_limits<double>::infinity();
      for (const auto& hyp : alive) best_alive = std::max(best_alive, hyp.log_prob);
      if (best_score(finished) >= best_alive) break;

      struct Candidate {
        std::size_t parent;
        TokenId token;
        double log_prob;
      };
      std::vector<Candidate> cands;
      std::vector<DecoderState> next_states(alive.size());
      for (std::size_t a = 0; a < alive.size(); ++a) {
        const TokenId prev = alive[a].ids.empty() ? kBosId : alive[a].ids.back();
        auto [logp, next] = step(alive[a].state, prev);
        next_states[a] = next;
        for (std::size_t tok = 0; tok < logp.size(); ++tok) {
          if (!is_emittable(tok)) continue;
          cands.push_back({a, static_cast<TokenId>(tok), alive[a].log_prob + logp[tok]});
        }
      }
      std::stable_sort(cands.begin(), cands.end(),
                       [](const Candidate& l, const Candidate& r) { return l.log_prob > r.log_prob; });
      std::vector<Hypothesis> next_alive;
      for (const Candidate& c : cands) {
        if (next_alive.size() >= k) break;
        const Hypothesis& parent = alive[c.parent];
        if (c.token == kEosId) {
          finished.push_back(Generation{parent.ids, c.log_prob, true});
          continue;
        }
        Hypothesis h{parent.ids, c.log_prob, next_states[c.parent]};
        h.ids.push_back(c.token);
        if (h.ids.size() >= max_len) {
          finished.push_back(Generation{h.ids, h.log_prob, false});
        } else {
          next_alive.push_back(std::move(h));
        }
      }
      alive = std::move(next_alive);
    }
    std::stable_sort(finished.begin(), finished.end(),
                     [](const Generation& l, const Generation& r) { return l.log_prob > r.log_prob; });
    std::vector<Generation> out;
    for (auto& g : finished) {
      if (out.size() >= k) break;
      if (std::find_if(out.begin(), out.end(), [&](const Generation& o) { return o.ids == g.ids; }) ==
          out.end())
        out.push_back(std::move(g));
    }
    return out;
  }

 private:
  static double best_score(const std::vector<Generation>& gs) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& g : gs) best = std::max(best, g.log_prob);
    return best;
  }

  const SelectionModel& model_;
  Tape tape_;
  EncoderStates h_;
  Var mask_;
  DecoderState init_;
};

}  // namespace detail

// Greedy returns one generation, beam up to `beam` distinct ones best first,
// sample `samples` independent draws. Sampling requires an rng.
inline std::vector<Generation> generate(const SelectionModel& model, const Sequence& x,
                                        const SelectionMask& mask, const DecodeOptions& opts,
                                        Rng* rng = nullptr) {
  const std::size_t max_len = opts.max_length ? opts.max_length : model.config().max_target_len;
  detail::Decoder dec(model, x, mask);
  switch (opts.mode) {
    case DecodeMode::kGreedy:
      return {dec.greedy(max_len)};
    case DecodeMode::kBeam:
      if (opts.beam == 0) throw std::invalid_argument("beam size must be at least 1");
      return dec.beam(opts.beam, max_len);
    case DecodeMode::kSample: {
      if (!rng) throw std::invalid_argument("sampling requires a random generator");
      if (!(opts.temperature > 0)) throw std::invalid_argument("temperature must be positive");
      std::vector<Generation> out;
      for (std::size_t i = 0; i < std::max<std::size_t>(opts.samples, 1); ++i)
        out.push_back(dec.sample(max_len, opts.temperature, *rng));
      return out;
    }
  }
  return {};
}

inline Generation greedy_decode(const SelectionModel& model, const Sequence& x,
                                const SelectionMask& mask) {
  return generate(model, x, mask, DecodeOptions{}).front();
}

}  // namespace selectgen
