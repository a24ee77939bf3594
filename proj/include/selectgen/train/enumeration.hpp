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

// Exact quantities by enumerating every non-empty selection mask; feasible
// for short sources only.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "selectgen/core/errors.hpp"
#include "selectgen/core/ops.hpp"
#include "selectgen/core/tape.hpp"
#include "selectgen/model/model.hpp"
#include "selectgen/train/objectives.hpp"
#include "selectgen/types.hpp"

namespace selectgen {

inline constexpr std::size_t kMaxEnumerationLength = 14;

inline void check_enumerable(std::size_t n) {
  if (n > kMaxEnumerationLength) throw EnumerationTooLarge(n, kMaxEnumerationLength);
}

// Masks 1 .. 2^n - 1; bit i of the index is position i.
inline std::vector<SelectionMask> nonzero_masks(std::size_t n) {
  check_enumerable(n);
  std::vector<SelectionMask> out;
  out.reserve((std::size_t{1} << n) - 1);
  for (std::uint32_t k = 1; k < (std::uint32_t{1} << n); ++k) {
    SelectionMask m = SelectionMask::zeros(n);
    for (std::size_t i = 0; i < n; ++i) m.bits[i] = (k >> i) & 1u;
    out.push_back(std::move(m));
  }
  return out;
}

// log p(beta | beta != 0) under a factorised Bernoulli.
inline double truncated_log_prob(const BernoulliVector& p, const SelectionMask& m) {
  double lp = 0.0, zero = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    lp += m.bits[i] ? std::log(p[i]) : std::log1p(-p[i]);
    zero += std::log1p(-p[i]);
  }
  return lp - std::log(-std::expm1(zero));
}

struct EnumerationTable {
  std::vector<SelectionMask> masks;
  std::vector<double> log_prior;       // log p(beta) under the prior, non-empty masks
  std::vector<double> log_likelihood;  // log p(Y | X, beta)
  BernoulliVector gamma;
  BernoulliVector q;
};

// Copies encoder values onto a fresh tape as constants.
inline EncoderStates constant_states(Tape& t, const EncoderStates& src) {
  EncoderStates out;
  out.ids = src.ids;
  out.matrix = t.constant(src.matrix.value());
  for (const Var& r : src.rows) out.rows.push_back(t.constant(r.value()));
  return out;
}

inline EnumerationTable enumerate(const SelectionModel& model, const Sequence& x, const Sequence& y) {
  check_enumerable(x.size());
  Tape enc(&model.params(), false);
  EncoderStates h = model.encode(enc, x);
  EnumerationTable tab;
  tab.gamma = to_bernoulli(model.prior_probs(enc, h), SelectorRole::kPrior);
  tab.q = to_bernoulli(model.posterior_probs(enc, h, model.encode_target(enc, y)),
                       SelectorRole::kPosterior);
  tab.masks = nonzero_masks(x.size());
  for (const SelectionMask& m : tab.masks) {
    Tape t(&model.params(), false);
    EncoderStates hc = constant_states(t, h);
    tab.log_likelihood.push_back(model.log_likelihood(t, hc, mask_var(t, m), y).scalar());
    tab.log_prior.push_back(truncated_log_prob(tab.gamma, m));
  }
  return tab;
}

inline double exact_marginal(const EnumerationTable& tab) {
  std::vector<double> joint(tab.masks.size());
  for (std::size_t k = 0; k < joint.size(); ++k) joint[k] = tab.log_prior[k] + tab.log_likelihood[k];
  return log_sum_exp(joint);
}

// log sum_{beta != 0} p(beta) p(Y | X, beta).
inline double exact_marginal(const SelectionModel& model, const Sequence& x, const Sequence& y) {
  return exact_marginal(enumerate(model, x, y));
}

// log p(beta | X, Y) for every enumerated mask.
inline std::vector<double> exact_log_posterior(const EnumerationTable& tab) {
  const double z = exact_marginal(tab);
  std::vector<double> out(tab.masks.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = tab.log_prior[k] + tab.log_likelihood[k] - z;
  return out;
}

inline std::vector<double> truncated_log_probs(const EnumerationTable& tab, const BernoulliVector& p) {
  std::vector<double> out;
  out.reserve(tab.masks.size());
  for (const SelectionMask& m : tab.masks) out.push_back(truncated_log_prob(p, m));
  return out;
}

// Bound of an arbitrary distribution over the enumerated masks, given by
// its log-probabilities: E_q[log p(Y|X,beta)] - KL(q || prior).
inline LossBreakdown exact_elbo(const EnumerationTable& tab, const std::vector<double>& log_q) {
  if (log_q.size() != tab.masks.size()) throw Error("exact_elbo: table size mismatch");
  LossBreakdown out;
  double recon = 0.0, kl = 0.0;
  for (std::size_t k = 0; k < log_q.size(); ++k) {
    const double w = std::exp(log_q[k]);
    if (w == 0.0) continue;
    recon += w * tab.log_likelihood[k];
    kl += w * (log_q[k] - tab.log_prior[k]);
  }
  out.reconstruction = -recon;
  out.kl = kl;
  out.kl_term = kl;
  out.total = out.reconstruction + out.kl_term;
  return out;
}

// The bound of the model's own posterior network; total is its negation.
inline LossBreakdown exact_elbo(const SelectionModel& model, const Sequence& x, const Sequence& y) {
  const EnumerationTable tab = enumerate(model, x, y);
  return exact_elbo(tab, truncated_log_probs(tab, tab.q));
}

namespace detail {

// sum_beta exp(log w(beta)) c(beta) with log w from `terms`.
inline Var enumerated_expectation(const BernoulliTerms& terms, const EnumerationTable& tab) {
  Tape& t = *terms.logits.tape();
  std::vector<Var> lq;
  lq.reserve(tab.masks.size());
  for (const SelectionMask& m : tab.masks) lq.push_back(mask_log_prob(terms, m));
  return dot(exp(concat(lq)), t.constant(tab.log_likelihood));
}

}  // namespace detail

// Exact gradient of the bound with respect to phi (ascent direction).
inline GradientMap exact_elbo_gradient_phi(const SelectionModel& model, const Sequence& x,
                                           const Sequence& y) {
  const EnumerationTable tab = enumerate(model, x, y);
  Tape t(&model.params());
  EncoderStates h = model.encode(t, x);
  BernoulliTerms prior = bernoulli_terms(model.prior_logits(t, h));
  BernoulliTerms post = bernoulli_terms(model.posterior_logits(t, h, model.encode_target(t, y)));
  Var bound = sub(detail::enumerated_expectation(post, tab), kl_truncated(post, prior));
  GradientMap g = t.backward(bound);
  g.restrict_to({Partition::kPosteriorSelector});
  return g;
}

// Exact gradient of E_{beta ~ prior}[log p(Y|X,beta)] with respect to the
// prior network (ascent direction).
inline GradientMap exact_expected_likelihood_gradient_prior(const SelectionModel& model,
                                                            const Sequence& x, const Sequence& y) {
  const EnumerationTable tab = enumerate(model, x, y);
  Tape t(&model.params());
  EncoderStates h = model.encode(t, x);
  BernoulliTerms prior = bernoulli_terms(model.prior_logits(t, h));
  GradientMap g = t.backward(detail::enumerated_expectation(prior, tab));
  g.restrict_to({Partition::kPriorSelector});
  return g;
}

}  // namespace selectgen
