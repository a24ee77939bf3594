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

// Per-strategy training objectives, the evidence lower bound and its
// score-function gradient.
//
// Masks are distributed over non-empty selections only: the all-zero mask
// is inadmissible, so every mask log-probability and KL divergence below is
// taken under the factorised Bernoulli conditioned on selecting at least one
// token. For sources of realistic length the correction is negligible.

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "selectgen/core/ops.hpp"
#include "selectgen/core/rng.hpp"
#include "selectgen/core/tape.hpp"
#include "selectgen/model/inference.hpp"
#include "selectgen/model/model.hpp"
#include "selectgen/train/config.hpp"
#include "selectgen/types.hpp"

namespace selectgen {

// Loss parts; total = reconstruction + kl_term + penalty + supervision.
// reconstruction is a negative log-likelihood; kl is the raw divergence and
// kl_term its contribution to the loss; control_variate is the baseline B.
struct LossBreakdown {
  double total = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
  double kl_term = 0.0;
  double penalty = 0.0;
  double supervision = 0.0;
  double control_variate = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o) {
    total += o.total;
    reconstruction += o.reconstruction;
    kl += o.kl;
    kl_term += o.kl_term;
    penalty += o.penalty;
    supervision += o.supervision;
    control_variate += o.control_variate;
    return *this;
  }
  LossBreakdown scaled(double s) const {
    return {total * s,   reconstruction * s, kl * s, kl_term * s, penalty * s,
            supervision * s, control_variate * s};
  }
  nlohmann::json to_json() const {
    return {{"total", total},     {"reconstruction", reconstruction},
            {"kl", kl},           {"kl_term", kl_term},
            {"penalty", penalty}, {"supervision", supervision},
            {"control_variate", control_variate}};
  }
};

struct TrainItem {
  Sequence source;
  Sequence target;  // ends with </s>
  SelectionMask labels;
};

enum class Phase { kPretrain, kJoint };

inline const char* phase_name(Phase p) { return p == Phase::kPretrain ? "pretrain" : "joint"; }

struct Objective {
  Var loss;
  LossBreakdown parts;
};

// ---------------------------------------------------------------------------
// Bernoulli algebra

// A factorised Bernoulli as tape nodes, with log-probabilities taken from
// the logits directly.
struct BernoulliTerms {
  Var logits;
  Var probs;
  Var log_p;    // log q_i
  Var log_1mp;  // log (1 - q_i)
};

inline BernoulliTerms bernoulli_terms(Var logits) {
  return {logits, sigmoid(logits), log_sigmoid(logits), log_sigmoid(scale(logits, -1.0))};
}

inline BernoulliTerms detach(const BernoulliTerms& b) {
  return {detach(b.logits), detach(b.probs), detach(b.log_p), detach(b.log_1mp)};
}

// log q(beta | beta != 0).
inline Var mask_log_prob(const BernoulliTerms& b, const SelectionMask& m) {
  Tape& t = *b.logits.tape();
  if (m.size() != b.probs.size()) throw Error("mask_log_prob: length mismatch");
  if (!m.any()) throw AllMaskedError("mask_log_prob");
  std::vector<double> on = m.as_weights(), off(on.size());
  for (std::size_t i = 0; i < on.size(); ++i) off[i] = 1.0 - on[i];
  Var lp = add(dot(t.constant(std::move(on)), b.log_p), dot(t.constant(std::move(off)), b.log_1mp));
  return sub(lp, log1m_exp(sum(b.log_1mp)));
}

inline Var kl_factorized(const BernoulliTerms& q, const BernoulliTerms& p) {
  Var on = mul(q.probs, sub(q.log_p, p.log_p));
  Var off = mul(one_minus(q.probs), sub(q.log_1mp, p.log_1mp));
  return sum(add(on, off));
}

// KL between the two distributions restricted to non-empty masks. With
// q0 = prod(1 - q_i), p0 likewise and A = log q0 - log p0:
//   KL' = (KL - q0 A) / (1 - q0) - log(1 - q0) + log(1 - p0).
inline Var kl_truncated(const BernoulliTerms& q, const BernoulliTerms& p) {
  Var sq = sum(q.log_1mp);
  Var sp = sum(p.log_1mp);
  Var log_keep_q = log1m_exp(sq);
  Var log_keep_p = log1m_exp(sp);
  Var inner = sub(kl_factorized(q, p), mul(exp(sq), sub(sq, sp)));
  return add(sub(mul(inner, exp(scale(log_keep_q, -1.0))), log_keep_q), log_keep_p);
}

inline double kl_bernoulli(const BernoulliVector& q, const BernoulliVector& p) {
  if (q.size() != p.size()) throw Error("kl_bernoulli: length mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double a = q[i], b = p[i];
    kl += a * std::log(a / b) + (1.0 - a) * std::log((1.0 - a) / (1.0 - b));
  }
  return kl;
}

inline double kl_truncated(const BernoulliVector& q, const BernoulliVector& p) {
  if (q.size() != p.size()) throw Error("kl_truncated: length mismatch");
  double sq = 0.0, sp = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    sq += std::log1p(-q[i]);
    sp += std::log1p(-p[i]);
  }
  const double keep_q = -std::expm1(sq), keep_p = -std::expm1(sp);
  return (kl_bernoulli(q, p) - std::exp(sq) * (sq - sp)) / keep_q - std::log(keep_q) +
         std::log(keep_p);
}

// Mean binary cross-entropy of probabilities against 0/1 labels.
inline Var bce(const BernoulliTerms& b, const SelectionMask& labels) {
  Tape& t = *b.logits.tape();
  if (labels.size() != b.probs.size()) throw Error("bce: label length mismatch");
  std::vector<double> on = labels.as_weights(), off(on.size());
  for (std::size_t i = 0; i < on.size(); ++i) off[i] = 1.0 - on[i];
  Var ll = add(dot(t.constant(std::move(on)), b.log_p), dot(t.constant(std::move(off)), b.log_1mp));
  return scale(ll, -1.0 / static_cast<double>(labels.size()));
}

inline double loss_bottom_up_selector(const BernoulliVector& gamma, const SelectionMask& gold) {
  if (gamma.size() != gold.size()) throw Error("loss_bottom_up_selector: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i)
    s -= gold.bits[i] ? std::log(gamma[i]) : std::log1p(-gamma[i]);
  return s / static_cast<double>(gold.size());
}

// lambda |mean(gamma) - alpha| + lambda (1 - max gamma), one example.
inline double soft_select_penalty(const std::vector<double>& gamma, double alpha, double lambda) {
  double sum = 0.0, mx = 0.0;
  for (double g : gamma) {
    sum += g;
    mx = std::max(mx, g);
  }
  return lambda * std::fabs(sum / static_cast<double>(gamma.size()) - alpha) + lambda * (1.0 - mx);
}

inline double kl_penalty(double kl, double epsilon, double lambda) {
  return lambda * std::fabs(kl - epsilon);
}

// B = log p(Y | X, E[beta]): the decoder run with soft weights q. Evaluated
// on its own tape, so nothing differentiates through it.
inline double control_variate(const SelectionModel& model, const Sequence& x, const Sequence& y,
                              const std::vector<double>& q) {
  return log_likelihood(model, x, y, q);
}

namespace detail {

inline std::vector<double> values_of(Var v) {
  const auto s = v.value().values();
  return {s.begin(), s.end()};
}

inline BernoulliVector as_bernoulli(const BernoulliTerms& b, SelectorRole role) {
  return BernoulliVector{values_of(b.probs), role};
}

// Zero-valued node whose gradient is -advantage * grad log q(beta).
inline Var score_surrogate(Var log_q, double advantage) {
  return scale(sub(log_q, detach(log_q)), -advantage);
}

inline Var mean_of(const std::vector<Var>& parts) {
  return scale(sum(concat(parts)), 1.0 / static_cast<double>(parts.size()));
}

inline Var ones_mask(Tape& t, std::size_t n) { return t.constant(Tensor(Shape{n}, 1.0)); }

struct Accumulator {
  std::vector<Var> recon, kl_term, supervision, surrogate, per_example_penalty, mean_gamma;
  LossBreakdown parts;
};

// Assembles the batch loss: means of the per-example parts plus an optional
// ratio penalty on the batch mean of per-example mean(gamma).
inline Objective finish(Accumulator& acc, std::size_t batch, const StrategyConfig* ratio) {
  const double inv = 1.0 / static_cast<double>(batch);
  std::vector<Var> terms;
  auto push_mean = [&](const std::vector<Var>& v, double* report) {
    if (v.empty()) return;
    Var m = mean_of(v);
    if (report) *report = m.scalar();
    terms.push_back(m);
  };
  push_mean(acc.recon, &acc.parts.reconstruction);
  push_mean(acc.kl_term, &acc.parts.kl_term);
  push_mean(acc.supervision, &acc.parts.supervision);
  push_mean(acc.surrogate, nullptr);
  double penalty = 0.0;
  if (!acc.per_example_penalty.empty()) {
    Var m = mean_of(acc.per_example_penalty);
    penalty += m.scalar();
    terms.push_back(m);
  }
  if (ratio && !acc.mean_gamma.empty()) {
    Var dev = abs(add_scalar(mean_of(acc.mean_gamma), -ratio->alpha));
    Var r = scale(dev, ratio->lambda);
    penalty += r.scalar();
    terms.push_back(r);
  }
  acc.parts.penalty = penalty;
  acc.parts.kl *= inv;
  acc.parts.control_variate *= inv;
  Var loss = terms.size() == 1 ? terms[0] : sum(concat(terms));
  acc.parts.total = acc.parts.reconstruction + acc.parts.kl_term + acc.parts.penalty +
                    acc.parts.supervision;
  return Objective{loss, acc.parts};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Strategies. Each builds the batch loss on one tape.

// Generator on the full mask; prior network fit to the labels.
inline Objective bottom_up_objective(Tape& t, const SelectionModel& model,
                                     std::span<const TrainItem> batch, const Dropout& drop = {}) {
  detail::Accumulator acc;
  for (const TrainItem& it : batch) {
    EncoderStates h = model.encode(t, it.source, drop);
    BernoulliTerms prior = bernoulli_terms(model.prior_logits(t, h));
    acc.recon.push_back(scale(
        model.log_likelihood(t, h, detail::ones_mask(t, h.size()), it.target, drop), -1.0));
    acc.supervision.push_back(bce(prior, it.labels));
  }
  return detail::finish(acc, batch.size(), nullptr);
}

// Decoder driven by the soft weights gamma, plus the selecting-ratio and
// max-gamma penalties.
inline Objective soft_select_objective(Tape& t, const SelectionModel& model,
                                       std::span<const TrainItem> batch, const StrategyConfig& cfg,
                                       const Dropout& drop = {}) {
  detail::Accumulator acc;
  for (const TrainItem& it : batch) {
    EncoderStates h = model.encode(t, it.source, drop);
    Var gamma = model.prior_probs(t, h, /*through_encoder=*/true);
    acc.recon.push_back(scale(model.log_likelihood(t, h, gamma, it.target, drop), -1.0));
    acc.mean_gamma.push_back(mean(gamma));
    acc.per_example_penalty.push_back(scale(one_minus(max_element(gamma)), cfg.lambda));
  }
  return detail::finish(acc, batch.size(), &cfg);
}

// Pretraining fits gamma to the labels while the generator learns from
// masks drawn from gamma. The joint phase adds the score-function update of
// the prior with the soft-select baseline.
inline Objective reinforce_objective(Tape& t, const SelectionModel& model,
                                     std::span<const TrainItem> batch, const StrategyConfig& cfg,
                                     Phase phase, Rng& rng, const Dropout& drop = {}) {
  detail::Accumulator acc;
  for (const TrainItem& it : batch) {
    EncoderStates h = model.encode(t, it.source, drop);
    BernoulliTerms prior = bernoulli_terms(model.prior_logits(t, h));
    const BernoulliVector gamma = detail::as_bernoulli(prior, SelectorRole::kPrior);
    const SelectionMask beta = sample_mask(gamma, rng);
    Var ll = model.log_likelihood(t, h, mask_var(t, beta), it.target, drop);
    acc.recon.push_back(scale(ll, -1.0));
    if (phase == Phase::kPretrain) {
      acc.supervision.push_back(bce(prior, it.labels));
      continue;
    }
    const double b = cfg.control_variate ? control_variate(model, it.source, it.target, gamma.probs) : 0.0;
    acc.parts.control_variate += b;
    acc.surrogate.push_back(detail::score_surrogate(mask_log_prob(prior, beta), ll.scalar() - b));
    acc.mean_gamma.push_back(mean(prior.probs));
  }
  return detail::finish(acc, batch.size(), phase == Phase::kJoint ? &cfg : nullptr);
}

// Pretraining: phi fits the labels; theta and gamma follow the bound with q
// held fixed. Joint phase: reconstruction under beta ~ q, lambda |KL - eps|,
// and the score-function update of phi with the soft-select baseline.
inline Objective vrs_objective(Tape& t, const SelectionModel& model,
                               std::span<const TrainItem> batch, const StrategyConfig& cfg,
                               Phase phase, Rng& rng, const Dropout& drop = {}) {
  detail::Accumulator acc;
  for (const TrainItem& it : batch) {
    EncoderStates h = model.encode(t, it.source, drop);
    BernoulliTerms prior = bernoulli_terms(model.prior_logits(t, h));
    BernoulliTerms post =
        bernoulli_terms(model.posterior_logits(t, h, model.encode_target(t, it.target, drop)));
    const BernoulliVector q = detail::as_bernoulli(post, SelectorRole::kPosterior);
    const SelectionMask beta = sample_mask(q, rng);
    Var ll = model.log_likelihood(t, h, mask_var(t, beta), it.target, drop);
    acc.recon.push_back(scale(ll, -1.0));
    if (phase == Phase::kPretrain) {
      Var kl = kl_truncated(detach(post), prior);
      acc.parts.kl += kl.scalar();
      acc.kl_term.push_back(kl);
      Var sup = bce(post, it.labels);
      if (cfg.supervise_prior_in_pretrain) sup = add(sup, bce(prior, it.labels));
      acc.supervision.push_back(sup);
      continue;
    }
    Var kl = kl_truncated(post, prior);
    acc.parts.kl += kl.scalar();
    acc.kl_term.push_back(
        scale(abs(add_scalar(kl, -cfg.epsilon_for(it.source.size()))), cfg.lambda));
    const double b = cfg.control_variate ? control_variate(model, it.source, it.target, q.probs) : 0.0;
    acc.parts.control_variate += b;
    acc.surrogate.push_back(detail::score_surrogate(mask_log_prob(post, beta), ll.scalar() - b));
  }
  return detail::finish(acc, batch.size(), nullptr);
}

inline Objective strategy_objective(Tape& t, const SelectionModel& model,
                                    std::span<const TrainItem> batch, const StrategyConfig& cfg,
                                    Phase phase, Rng& rng, const Dropout& drop = {}) {
  switch (cfg.kind) {
    case StrategyKind::kBottomUp:
      return bottom_up_objective(t, model, batch, drop);
    case StrategyKind::kSoftSelect:
      return soft_select_objective(t, model, batch, cfg, drop);
    case StrategyKind::kReinforceSelect:
      return reinforce_objective(t, model, batch, cfg, phase, rng, drop);
    case StrategyKind::kVariational:
      return vrs_objective(t, model, batch, cfg, phase, rng, drop);
  }
  throw Error("unknown strategy");
}

// ---------------------------------------------------------------------------
// Single-example entry points (dropout off)

inline LossBreakdown loss_soft_select(const SelectionModel& model, const Sequence& x,
                                      const Sequence& y, const StrategyConfig& cfg) {
  Tape t(&model.params(), false);
  const TrainItem item{x, y, {}};
  return soft_select_objective(t, model, std::span<const TrainItem>(&item, 1), cfg).parts;
}

inline std::pair<LossBreakdown, GradientMap> loss_reinforce(const SelectionModel& model,
                                                            const Sequence& x, const Sequence& y,
                                                            const StrategyConfig& cfg, Rng& rng) {
  Tape t(&model.params());
  const TrainItem item{x, y, {}};
  Objective o = reinforce_objective(t, model, std::span<const TrainItem>(&item, 1), cfg,
                                    Phase::kJoint, rng);
  return {o.parts, t.backward(o.loss)};
}

inline std::pair<LossBreakdown, GradientMap> vrs_loss(const SelectionModel& model,
                                                      const Sequence& x, const Sequence& y,
                                                      const StrategyConfig& cfg, Rng& rng) {
  Tape t(&model.params());
  const TrainItem item{x, y, {}};
  Objective o =
      vrs_objective(t, model, std::span<const TrainItem>(&item, 1), cfg, Phase::kJoint, rng);
  return {o.parts, t.backward(o.loss)};
}

// Single-sample bound: log p(Y | X, beta) - KL(q || prior), beta ~ q.
// total is the negated bound.
inline LossBreakdown elbo(const SelectionModel& model, const Sequence& x, const Sequence& y,
                          Rng& rng) {
  Tape t(&model.params(), false);
  EncoderStates h = model.encode(t, x);
  BernoulliTerms prior = bernoulli_terms(model.prior_logits(t, h));
  BernoulliTerms post = bernoulli_terms(model.posterior_logits(t, h, model.encode_target(t, y)));
  const SelectionMask beta = sample_mask(detail::as_bernoulli(post, SelectorRole::kPosterior), rng);
  LossBreakdown out;
  out.reconstruction = -model.log_likelihood(t, h, mask_var(t, beta), y).scalar();
  out.kl = kl_truncated(post, prior).scalar();
  out.kl_term = out.kl;
  out.total = out.reconstruction + out.kl_term;
  return out;
}

// Single-sample estimate of the bound's gradient with respect to phi
// (ascent direction): grad log q(beta) (log p(Y|X,beta) - B) - grad KL.
// Without the control variate B is 0.
inline GradientMap grad_phi_reinforce(const SelectionModel& model, const Sequence& x,
                                      const Sequence& y, Rng& rng, bool use_control_variate = true) {
  Tape t(&model.params());
  EncoderStates h = model.encode(t, x);
  BernoulliTerms prior = bernoulli_terms(model.prior_logits(t, h));
  BernoulliTerms post = bernoulli_terms(model.posterior_logits(t, h, model.encode_target(t, y)));
  const BernoulliVector q = detail::as_bernoulli(post, SelectorRole::kPosterior);
  const SelectionMask beta = sample_mask(q, rng);
  const double ll = log_likelihood(model, x, y, beta);
  const double b = use_control_variate ? control_variate(model, x, y, q.probs) : 0.0;
  Var loss = add(detail::score_surrogate(mask_log_prob(post, beta), ll - b), kl_truncated(post, prior));
  GradientMap g = t.backward(loss);
  g.restrict_to({Partition::kPosteriorSelector});
  g.scale(-1.0);
  return g;
}

}  // namespace selectgen
