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

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "selectgen/core/errors.hpp"
#include "selectgen/core/gradcheck.hpp"
#include "selectgen/data/corpus.hpp"
#include "selectgen/data/grammar.hpp"
#include "selectgen/model/inference.hpp"
#include "selectgen/train/adam.hpp"
#include "selectgen/train/config.hpp"
#include "selectgen/train/enumeration.hpp"
#include "selectgen/train/heuristics.hpp"
#include "selectgen/train/objectives.hpp"
#include "selectgen/train/trainer.hpp"
#include "test_util.hpp"

namespace selectgen {
namespace {

using testing::Reference;
using testing::random_sequence;
using testing::seq;
using testing::tiny_model;

void set_param(SelectionModel& m, const std::string& name, double value) {
  for (double& v : m.params().value(m.params().id(name)).values()) v = value;
}

// Brute-force truncated mask probability, independent of the library.
double brute_truncated_log_prob(const std::vector<double>& p, std::uint32_t bits) {
  double lp = 0, zero = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    lp += ((bits >> i) & 1) ? std::log(p[i]) : std::log(1 - p[i]);
    zero += std::log(1 - p[i]);
  }
  return lp - std::log(1 - std::exp(zero));
}

SelectionMask mask_of(std::uint32_t bits, std::size_t n) {
  SelectionMask m = SelectionMask::zeros(n);
  for (std::size_t i = 0; i < n; ++i) m.bits[i] = (bits >> i) & 1;
  return m;
}

std::vector<double> flatten(const GradientMap& g, const ParamStore& ps, Partition part) {
  std::vector<double> out;
  for (ParamId id = 0; id < ps.size(); ++id) {
    if (ps.partition(id) != part) continue;
    const std::size_t n = ps.value(id).size();
    for (std::size_t k = 0; k < n; ++k) out.push_back(g.contains(id) ? g.at(id)[k] : 0.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// heuristic_labels

TEST(HeuristicLabelsTest, OverlapMinusStopwords) {
  data::Vocabulary v;
  v.add("a", true);
  for (const char* w : {"b", "c", "d"}) v.add(w);
  const Sequence x = v.encode(data::tokenize("a b c d"));
  const Sequence y = v.encode_target(data::tokenize("c a"));
  EXPECT_EQ(heuristic_labels(x, y, HeuristicMode::kOverlap, v).str(), "0010");
}

TEST(HeuristicLabelsTest, OverlapIsCaseFolded) {
  data::Vocabulary v;
  for (const char* w : {"b", "c"}) v.add(w);
  Sequence x = v.encode({"b", "c"});
  x.surface = {"B", "c"};
  const Sequence y = v.encode_target({"b"});
  EXPECT_EQ(overlap_labels(x, y, v).str(), "10");
}

TEST(HeuristicLabelsTest, NoOverlapForcesFirstContentToken) {
  data::Vocabulary v;
  v.add("the", true);
  for (const char* w : {"b", "c", "z"}) v.add(w);
  const Sequence x = v.encode({"the", "b", "c"});
  const Sequence y = v.encode_target({"z"});
  const SelectionMask m = heuristic_labels(x, y, HeuristicMode::kOverlap, v);
  EXPECT_EQ(m.count(), 1u);
  EXPECT_EQ(m.str(), "010");
}

TEST(HeuristicLabelsTest, EmbeddingNearestPicksCosineNeighbour) {
  data::Vocabulary v;
  v.add("the", true);
  for (const char* w : {"b", "c", "z"}) v.add(w);
  Tensor emb(Shape{v.size(), 2});
  auto set = [&](const char* w, double a, double b) {
    emb.at(v.id(w), 0) = a;
    emb.at(v.id(w), 1) = b;
  };
  set("the", 1, 0);
  set("b", 1, 0.1);
  set("c", 0, 1);
  set("z", 0.1, 1);
  const Sequence x = v.encode({"the", "b", "c"});
  const Sequence y = v.encode_target({"z", "the"});
  EXPECT_EQ(heuristic_labels(x, y, HeuristicMode::kEmbeddingNearest, v, &emb).str(), "001");
  EXPECT_THROW(heuristic_labels(x, y, HeuristicMode::kEmbeddingNearest, v, nullptr), Error);
}

TEST(HeuristicLabelsTest, OverlapRecoversGoldOnSyntheticCorpus) {
  const data::Grammar g = data::default_grammar();
  const data::Vocabulary v = data::build_vocabulary(g);
  const data::Corpus corpus = data::generate_corpus(g, v, 500, 3);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& ex : corpus) {
    const SelectionMask m = heuristic_labels(ex.source, ex.target, HeuristicMode::kOverlap, v);
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (v.is_stopword(ex.source.ids[i])) {
        EXPECT_EQ(m.bits[i], 0);
        continue;
      }
      tp += m.bits[i] && ex.gold.bits[i];
      fp += m.bits[i] && !ex.gold.bits[i];
      fn += !m.bits[i] && ex.gold.bits[i];
    }
  }
  EXPECT_GT(tp, 0u);
  EXPECT_EQ(fp, 0u);
  EXPECT_EQ(fn, 0u);
}

// ---------------------------------------------------------------------------
// closed-form losses

TEST(BottomUpLossTest, Examples) {
  const double lo = 1e-7, hi = 1 - 1e-7;
  EXPECT_LT(loss_bottom_up_selector(BernoulliVector{{hi, lo, hi}}, SelectionMask::parse("101")), 1e-6);
  EXPECT_NEAR(loss_bottom_up_selector(BernoulliVector{{0.5, 0.5}}, SelectionMask::parse("10")),
              std::log(2.0), 1e-15);
  EXPECT_NEAR(loss_bottom_up_selector(BernoulliVector{{0.9, 0.1}}, SelectionMask::parse("10")),
              -(std::log(0.9) + std::log(0.9)) / 2, 1e-15);
  EXPECT_NEAR(-(std::log(0.9) + std::log(0.9)) / 2, 0.1054, 1e-4);
}

TEST(BottomUpLossTest, TapeFormMatchesValueForm) {
  SelectionModel m = tiny_model(1);
  const Sequence x = seq({4, 5, 6});
  const SelectionMask gold = SelectionMask::parse("101");
  Tape t(&m.params(), false);
  BernoulliTerms terms = bernoulli_terms(m.prior_logits(t, m.encode(t, x)));
  EXPECT_NEAR(bce(terms, gold).scalar(), loss_bottom_up_selector(prior(m, x), gold), 1e-12);
}

TEST(SoftSelectTest, PenaltyExamples) {
  EXPECT_NEAR(soft_select_penalty({0.2, 0.4}, 0.25, 2.0), 1.3, 1e-15);
  EXPECT_NEAR(soft_select_penalty({0.3, 0.3, 0.6}, 0.4, 1.0), 0.4, 1e-15);
}

TEST(SoftSelectTest, SaturatedGammaWithoutPenaltyIsPlainNll) {
  SelectionModel m = tiny_model(2);
  set_param(m, "prior.l2.w", 0.0);
  set_param(m, "prior.l2.b", 40.0);
  StrategyConfig cfg;
  cfg.kind = StrategyKind::kSoftSelect;
  cfg.lambda = 0.0;
  const Sequence x = seq({4, 5, 6}), y = seq({7, 8, kEosId});
  const LossBreakdown b = loss_soft_select(m, x, y, cfg);
  EXPECT_EQ(b.penalty, 0.0);
  EXPECT_NEAR(b.total, -log_likelihood(m, x, y, SelectionMask::ones(3)), 1e-5);
  EXPECT_NEAR(b.total, b.reconstruction, 1e-15);
}

TEST(SoftSelectTest, RatioAtTargetLeavesOnlyMaxTerm) {
  SelectionModel m = tiny_model(2);
  set_param(m, "prior.l2.w", 0.0);
  set_param(m, "prior.l2.b", 0.0);  // gamma = 0.5
  StrategyConfig cfg;
  cfg.kind = StrategyKind::kSoftSelect;
  cfg.alpha = 0.5;
  cfg.lambda = 2.0;
  const LossBreakdown b = loss_soft_select(m, seq({4, 5}), seq({6, kEosId}), cfg);
  EXPECT_NEAR(b.penalty, 2.0 * 0.5, 1e-15);
  EXPECT_NEAR(b.total, b.reconstruction + b.penalty, 1e-12);
}

TEST(SoftSelectTest, BatchRatioUsesMeanOfPerExampleMeans) {
  SelectionModel m = tiny_model(3);
  StrategyConfig cfg;
  cfg.kind = StrategyKind::kSoftSelect;
  cfg.alpha = 0.1;
  cfg.lambda = 1.5;
  const std::vector<TrainItem> batch{{seq({4, 5}), seq({6, kEosId}), {}},
                                     {seq({7, 8, 4, 5}), seq({5, kEosId}), {}}};
  Tape t(&m.params(), false);
  const Objective o = soft_select_objective(t, m, batch, cfg);
  double ratio = 0, max_term = 0;
  for (const auto& it : batch) {
    const auto g = prior(m, it.source).probs;
    double s = 0, mx = 0;
    for (double v : g) {
      s += v;
      mx = std::max(mx, v);
    }
    ratio += s / g.size() / batch.size();
    max_term += cfg.lambda * (1 - mx) / batch.size();
  }
  EXPECT_NEAR(o.parts.penalty, cfg.lambda * std::fabs(ratio - cfg.alpha) + max_term, 1e-12);
  EXPECT_NEAR(o.loss.scalar(), o.parts.total, 1e-12);
}

TEST(KlPenaltyTest, Examples) {
  EXPECT_NEAR(kl_penalty(2.0, 0.5, 3.0), 4.5, 1e-15);
  EXPECT_NEAR(kl_penalty(0.2, 0.5, 3.0), 0.9, 1e-15);
  EXPECT_EQ(kl_penalty(0.7, 0.7, 3.0), 0.0);
  EXPECT_EQ(kl_penalty(1.25, 0.0, 2.0), 2.5);
}

TEST(KlPenaltyTest, SubgradientAtKinkIsZero) {
  ParamStore ps;
  ps.add("k", {1}, Partition::kPosteriorSelector);
  ps.value(0)[0] = 0.5;
  Tape t(&ps);
  GradientMap g = t.backward(scale(abs(add_scalar(t.param(0), -0.5)), 3.0));
  EXPECT_EQ(g.at(0)[0], 0.0);
}

// ---------------------------------------------------------------------------
// KL

TEST(KlBernoulliTest, Examples) {
  EXPECT_EQ(kl_bernoulli(BernoulliVector{{0.3, 0.8}}, BernoulliVector{{0.3, 0.8}}), 0.0);
  EXPECT_NEAR(kl_bernoulli(BernoulliVector{{0.9}}, BernoulliVector{{0.5}}),
              0.9 * std::log(1.8) + 0.1 * std::log(0.2), 1e-15);
  EXPECT_NEAR(kl_bernoulli(BernoulliVector{{0.9}}, BernoulliVector{{0.5}}), 0.368064, 1e-6);
  const double a = kl_bernoulli(BernoulliVector{{0.2}}, BernoulliVector{{0.6}});
  const double b = kl_bernoulli(BernoulliVector{{0.7}}, BernoulliVector{{0.1}});
  EXPECT_NEAR(kl_bernoulli(BernoulliVector{{0.2, 0.7}}, BernoulliVector{{0.6, 0.1}}), a + b, 1e-15);
}

TEST(KlBernoulliTest, NonNegativeOnRandomPairs) {
  Rng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> q(5), p(5);
    for (auto& v : q) v = rng.uniform(1e-6, 1 - 1e-6);
    for (auto& v : p) v = rng.uniform(1e-6, 1 - 1e-6);
    EXPECT_GE(kl_bernoulli({q}, {p}), 0.0);
    EXPECT_GE(kl_truncated(BernoulliVector{q}, BernoulliVector{p}), -1e-12);
  }
}

TEST(KlTruncatedTest, MatchesBruteForceSumOverNonEmptyMasks) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(6);
    std::vector<double> q(n), p(n);
    for (auto& v : q) v = rng.uniform(0.01, 0.99);
    for (auto& v : p) v = rng.uniform(0.01, 0.99);
    double expect = 0;
    for (std::uint32_t bits = 1; bits < (1u << n); ++bits) {
      const double lq = brute_truncated_log_prob(q, bits);
      expect += std::exp(lq) * (lq - brute_truncated_log_prob(p, bits));
    }
    EXPECT_NEAR(kl_truncated(BernoulliVector{q}, BernoulliVector{p}), expect, 1e-12);
    // Tape form.
    Tape t;
    auto logit = [&](const std::vector<double>& v) {
      std::vector<double> l;
      for (double x : v) l.push_back(std::log(x / (1 - x)));
      return bernoulli_terms(t.constant(l));
    };
    EXPECT_NEAR(kl_truncated(logit(q), logit(p)).scalar(), expect, 1e-12);
  }
}

TEST(MaskLogProbTest, TruncatedAndNormalized) {
  Tape t;
  const std::vector<double> q{0.3, 0.6, 0.2};
  std::vector<double> l;
  for (double x : q) l.push_back(std::log(x / (1 - x)));
  BernoulliTerms terms = bernoulli_terms(t.constant(l));
  double total = 0;
  for (std::uint32_t bits = 1; bits < 8; ++bits) {
    const double lp = mask_log_prob(terms, mask_of(bits, 3)).scalar();
    EXPECT_NEAR(lp, brute_truncated_log_prob(q, bits), 1e-14);
    EXPECT_NEAR(lp, truncated_log_prob(BernoulliVector{q}, mask_of(bits, 3)), 1e-14);
    total += std::exp(lp);
  }
  EXPECT_NEAR(total, 1.0, 1e-14);
  EXPECT_THROW(mask_log_prob(terms, SelectionMask::zeros(3)), AllMaskedError);
}

// ---------------------------------------------------------------------------
// control variate

TEST(ControlVariateTest, Limits) {
  SelectionModel m = tiny_model(6);
  const Sequence x = seq({4, 5, 6}), y = seq({7, kEosId});
  const double hi = 1 - 1e-9, lo = 1e-9;
  EXPECT_NEAR(control_variate(m, x, y, {hi, hi, hi}), log_likelihood(m, x, y, SelectionMask::ones(3)),
              1e-7);
  EXPECT_NEAR(control_variate(m, x, y, {lo, hi, lo}),
              log_likelihood(m, x, y, SelectionMask::one_hot(3, 1)), 1e-7);
}

TEST(ControlVariateTest, MatchesReferenceSoftMask) {
  SelectionModel m = tiny_model(7);
  Reference ref(m);
  const Sequence x = seq({4, 5, 6, 7}), y = seq({8, 4, kEosId});
  const std::vector<double> q{0.2, 0.9, 0.5, 0.05};
  double expect = 0;
  for (double v : ref.step_log_probs(x, q, y)) expect += v;
  EXPECT_NEAR(control_variate(m, x, y, q), expect, 1e-12);
}

TEST(ControlVariateTest, CarriesNoGradient) {
  SelectionModel m = tiny_model(8);
  StrategyConfig cfg;
  Rng r1(3), r2(3);
  cfg.control_variate = true;
  auto [with_b, g_with] = vrs_loss(m, seq({4, 5, 6}), seq({7, kEosId}), cfg, r1);
  EXPECT_NE(with_b.control_variate, 0.0);
  // The baseline shifts the advantage only; the reported loss is unchanged.
  cfg.control_variate = false;
  auto [without_b, g_without] = vrs_loss(m, seq({4, 5, 6}), seq({7, kEosId}), cfg, r2);
  EXPECT_EQ(with_b.total, without_b.total);
  // Generator weights see only the reconstruction, which is the same sample.
  const ParamId out = m.params().id("gen.out.w");
  EXPECT_EQ(g_with.at(out), g_without.at(out));
}

TEST(ScoreSurrogateTest, ZeroAdvantageGivesZeroGradientAndValue) {
  SelectionModel m = tiny_model(9);
  Tape t(&m.params());
  EncoderStates h = m.encode(t, seq({4, 5, 6}));
  BernoulliTerms post = bernoulli_terms(m.posterior_logits(t, h, m.encode_target(t, seq({7, kEosId}))));
  Var s = detail::score_surrogate(mask_log_prob(post, SelectionMask::parse("101")), 0.0);
  EXPECT_EQ(s.scalar(), 0.0);
  GradientMap g = t.backward(s);
  for (const auto& [id, grad] : g.entries())
    for (double v : grad.values()) EXPECT_EQ(v, 0.0);
}

// ---------------------------------------------------------------------------
// bounds and enumeration

TEST(ElboTest, PosteriorEqualToPriorHasZeroKl) {
  SelectionModel m = tiny_model(10);
  testing::copy_prior_onto_posterior(m);
  const Sequence x = seq({4, 5, 6, 7}), y = seq({8, 5, kEosId});
  EXPECT_EQ(prior(m, x).probs, posterior(m, x, y).probs);
  Rng rng(1);
  const LossBreakdown b = elbo(m, x, y, rng);
  EXPECT_NEAR(b.kl, 0.0, 1e-12);
  const LossBreakdown exact = exact_elbo(m, x, y);
  EXPECT_NEAR(exact.kl, 0.0, 1e-12);
  // Expected reconstruction under the prior, by enumeration.
  const EnumerationTable tab = enumerate(m, x, y);
  double recon = 0;
  for (std::size_t k = 0; k < tab.masks.size(); ++k)
    recon += std::exp(tab.log_prior[k]) * tab.log_likelihood[k];
  EXPECT_NEAR(-exact.total, recon, 1e-12);
}

TEST(ElboTest, SampledBoundAveragesToExactBound) {
  SelectionModel m = tiny_model(11);
  const Sequence x = seq({4, 5, 6}), y = seq({7, kEosId});
  const double exact = exact_elbo(m, x, y).total;
  Rng rng(2);
  const int draws = 20000;
  double sum = 0, sq = 0;
  for (int d = 0; d < draws; ++d) {
    const double v = elbo(m, x, y, rng).total;
    sum += v;
    sq += v * v;
  }
  const double mean = sum / draws;
  const double se = std::sqrt((sq / draws - mean * mean) / draws);
  EXPECT_NEAR(mean, exact, 4 * se + 1e-12);
}

TEST(EnumerationTest, BoundBelowMarginalAndTightAtPosterior) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    SelectionModel m = tiny_model(400 + trial);
    const Sequence x = random_sequence(rng, 1 + rng.below(6), 9);
    const Sequence y = random_sequence(rng, 1 + rng.below(3), 9, true);
    const EnumerationTable tab = enumerate(m, x, y);
    const double marginal = exact_marginal(tab);
    EXPECT_LE(-exact_elbo(tab, truncated_log_probs(tab, tab.q)).total, marginal + 1e-9);
    EXPECT_NEAR(-exact_elbo(tab, exact_log_posterior(tab)).total, marginal, 1e-9);
  }
}

TEST(EnumerationTest, MarginalMatchesBruteForceScript) {
  SelectionModel m = tiny_model(13);
  Reference ref(m);
  const Sequence x = seq({4, 5, 6}), y = seq({7, 8, kEosId});
  const std::vector<double> gamma = ref.prior(x);
  double total = 0;
  for (std::uint32_t bits = 1; bits < 8; ++bits) {
    double ll = 0;
    for (double v : ref.step_log_probs(x, mask_of(bits, 3).as_weights(), y)) ll += v;
    total += std::exp(brute_truncated_log_prob(gamma, bits) + ll);
  }
  EXPECT_NEAR(exact_marginal(m, x, y), std::log(total), 1e-12);
}

TEST(EnumerationTest, SingleTokenAndSaturatedPrior) {
  SelectionModel m = tiny_model(14);
  const Sequence y = seq({7, kEosId});
  EXPECT_NEAR(exact_marginal(m, seq({5}), y), log_likelihood(m, seq({5}), y, SelectionMask::ones(1)),
              1e-12);
  set_param(m, "prior.l2.w", 0.0);
  set_param(m, "prior.l2.b", 40.0);
  const Sequence x = seq({4, 5, 6});
  EXPECT_NEAR(exact_marginal(m, x, y), log_likelihood(m, x, y, SelectionMask::ones(3)), 1e-5);
}

TEST(EnumerationTest, TooLongSourceRejected) {
  SelectionModel m = tiny_model(15);
  std::vector<TokenId> ids(15, 4);
  EXPECT_THROW(enumerate(m, seq(ids), seq({5, kEosId})), EnumerationTooLarge);
  EXPECT_EQ(nonzero_masks(3).size(), 7u);
}

TEST(EnumerationTest, ExactGradientMatchesFiniteDifferencesOfExactBound) {
  SelectionModel m = tiny_model(16);
  const Sequence x = seq({4, 5, 6}), y = seq({7, kEosId});
  const GradientMap exact = exact_elbo_gradient_phi(m, x, y);
  std::vector<ParamId> phi;
  for (ParamId id = 0; id < m.params().size(); ++id)
    if (m.params().partition(id) == Partition::kPosteriorSelector) phi.push_back(id);
  // Numeric ascent gradient of the value-level enumerated bound.
  LossBuilder bound = [&](Tape& t) { return t.scalar(-exact_elbo(m, x, y).total); };
  const GradientMap numeric = numeric_gradients(bound, m.params(), 1e-5, phi);
  EXPECT_LT(compare_gradients(exact, numeric), 1e-6);
}

// ---------------------------------------------------------------------------
// estimators

TEST(EstimatorTest, BareScoreHasZeroMean) {
  SelectionModel m(testing::micro_config());
  m.initialize(17);
  const Sequence x = seq({4, 5, 6}), y = seq({5, kEosId});
  Rng rng(18);
  const int draws = 100000;
  const ParamStore& ps = m.params();
  std::vector<double> sum, sq;
  for (int d = 0; d < draws; ++d) {
    Tape t(&ps);
    EncoderStates h = m.encode(t, x);
    BernoulliTerms post = bernoulli_terms(m.posterior_logits(t, h, m.encode_target(t, y)));
    const SelectionMask beta = sample_mask(detail::as_bernoulli(post, SelectorRole::kPosterior), rng);
    const auto g = flatten(t.backward(mask_log_prob(post, beta)), ps, Partition::kPosteriorSelector);
    if (sum.empty()) sum.assign(g.size(), 0.0), sq.assign(g.size(), 0.0);
    for (std::size_t k = 0; k < g.size(); ++k) {
      sum[k] += g[k];
      sq[k] += g[k] * g[k];
    }
  }
  for (std::size_t k = 0; k < sum.size(); ++k) {
    const double mean = sum[k] / draws;
    const double se = std::sqrt(std::max(0.0, sq[k] / draws - mean * mean) / draws);
    EXPECT_LE(std::fabs(mean), 4 * se + 1e-12) << "coordinate " << k;
  }
}

TEST(EstimatorTest, PhiGradientMeanMatchesEnumeration) {
  SelectionModel m(testing::micro_config());
  m.initialize(19);
  const Sequence x = seq({4, 5, 6, 4}), y = seq({6, 5, kEosId});
  const auto exact = flatten(exact_elbo_gradient_phi(m, x, y), m.params(),
                             Partition::kPosteriorSelector);
  Rng rng(20);
  const int draws = 50000;
  std::vector<double> sum(exact.size(), 0.0), sq(exact.size(), 0.0);
  for (int d = 0; d < draws; ++d) {
    const auto g = flatten(grad_phi_reinforce(m, x, y, rng), m.params(), Partition::kPosteriorSelector);
    for (std::size_t k = 0; k < g.size(); ++k) {
      sum[k] += g[k];
      sq[k] += g[k] * g[k];
    }
  }
  for (std::size_t k = 0; k < exact.size(); ++k) {
    const double mean = sum[k] / draws;
    const double se = std::sqrt(std::max(0.0, sq[k] / draws - mean * mean) / draws);
    EXPECT_LE(std::fabs(mean - exact[k]), 4 * se + 1e-10) << "coordinate " << k;
  }
}

TEST(EstimatorTest, EqualLikelihoodAndBaselineLeavesOnlyKlGradient) {
  // Zero output layer: log p(Y|X,beta) is the same for every mask and equals B.
  SelectionModel m = tiny_model(21);
  set_param(m, "gen.out.w", 0.0);
  set_param(m, "gen.out.b", 0.0);
  const Sequence x = seq({4, 5, 6}), y = seq({7, kEosId});
  Rng rng(22);
  const GradientMap est = grad_phi_reinforce(m, x, y, rng);
  Tape t(&m.params());
  EncoderStates h = m.encode(t, x);
  BernoulliTerms prior_t = bernoulli_terms(m.prior_logits(t, h));
  BernoulliTerms post = bernoulli_terms(m.posterior_logits(t, h, m.encode_target(t, y)));
  GradientMap kl = t.backward(kl_truncated(post, prior_t));
  for (const auto& [id, g] : est.entries())
    for (std::size_t k = 0; k < g.size(); ++k) EXPECT_NEAR(g[k], -kl.at(id)[k], 1e-12);
}

TEST(EstimatorTest, ControlVariateKeepsMeanAndCutsVariance) {
  SelectionModel m(testing::micro_config());
  m.initialize(23);
  const Sequence x = seq({4, 5, 6}), y = seq({6, 4, kEosId});
  const int draws = 10000;
  double var_with = 0, var_without = 0;
  std::vector<double> mean_with, mean_without;
  for (bool cv : {true, false}) {
    Rng rng(24);
    std::vector<double> sum, sq;
    for (int d = 0; d < draws; ++d) {
      const auto g = flatten(grad_phi_reinforce(m, x, y, rng, cv), m.params(),
                             Partition::kPosteriorSelector);
      if (sum.empty()) sum.assign(g.size(), 0.0), sq.assign(g.size(), 0.0);
      for (std::size_t k = 0; k < g.size(); ++k) {
        sum[k] += g[k];
        sq[k] += g[k] * g[k];
      }
    }
    double trace = 0;
    std::vector<double> means;
    for (std::size_t k = 0; k < sum.size(); ++k) {
      const double mu = sum[k] / draws;
      means.push_back(mu);
      trace += sq[k] / draws - mu * mu;
    }
    (cv ? var_with : var_without) = trace;
    (cv ? mean_with : mean_without) = means;
  }
  EXPECT_LT(var_with, var_without);
  const auto exact = flatten(exact_elbo_gradient_phi(m, x, y), m.params(),
                             Partition::kPosteriorSelector);
  for (std::size_t k = 0; k < exact.size(); ++k) {
    EXPECT_NEAR(mean_with[k], exact[k], 5 * std::sqrt(var_with / draws) + 1e-10);
    EXPECT_NEAR(mean_without[k], exact[k], 5 * std::sqrt(var_without / draws) + 1e-10);
  }
}

// ---------------------------------------------------------------------------
// strategy objectives

TEST(VrsObjectiveTest, ZeroEpsilonIsWeightedKl) {
  SelectionModel m = tiny_model(25);
  StrategyConfig cfg;
  cfg.epsilon_abs = 0.0;
  cfg.lambda = 2.5;
  Rng rng(1);
  auto [b, g] = vrs_loss(m, seq({4, 5, 6}), seq({7, kEosId}), cfg, rng);
  EXPECT_NEAR(b.kl_term, 2.5 * b.kl, 1e-12);
  EXPECT_NEAR(b.total, b.reconstruction + b.kl_term, 1e-12);
}

TEST(VrsObjectiveTest, GradientsRouteToAllThreePartitions) {
  SelectionModel m = tiny_model(26);
  StrategyConfig cfg;
  cfg.epsilon_abs = 0.0;
  Rng rng(2);
  auto [b, g] = vrs_loss(m, seq({4, 5, 6}), seq({7, kEosId}), cfg, rng);
  bool gen = false, pri = false, post = false;
  for (const auto& [id, grad] : g.entries()) {
    const Partition p = m.params().partition(id);
    gen = gen || p == Partition::kGenerator;
    pri = pri || p == Partition::kPriorSelector;
    post = post || p == Partition::kPosteriorSelector;
  }
  EXPECT_TRUE(gen);
  EXPECT_TRUE(pri);
  EXPECT_TRUE(post);
  // The prior network sees the KL only: its gradient equals lambda * dKL.
  Tape t(&m.params());
  EncoderStates h = m.encode(t, seq({4, 5, 6}));
  BernoulliTerms pr = bernoulli_terms(m.prior_logits(t, h));
  BernoulliTerms po = bernoulli_terms(m.posterior_logits(t, h, m.encode_target(t, seq({7, kEosId}))));
  GradientMap kl = t.backward(kl_truncated(po, pr));
  const ParamId w = m.params().id("prior.l2.w");
  for (std::size_t k = 0; k < kl.at(w).size(); ++k) EXPECT_NEAR(g.at(w)[k], kl.at(w)[k], 1e-12);
}

TEST(VrsObjectiveTest, KlAtEpsilonLeavesReconstruction) {
  SelectionModel m = tiny_model(27);
  const Sequence x = seq({4, 5, 6}), y = seq({7, kEosId});
  StrategyConfig cfg;
  cfg.lambda = 4.0;
  cfg.epsilon_abs = kl_truncated(posterior(m, x, y), prior(m, x));
  Rng rng(3);
  auto [b, g] = vrs_loss(m, x, y, cfg, rng);
  EXPECT_NEAR(b.kl_term, 0.0, 1e-12);
  EXPECT_NEAR(b.total, b.reconstruction, 1e-12);
}

TEST(VrsObjectiveTest, EpsilonScalesWithSourceLength) {
  StrategyConfig cfg;
  cfg.epsilon_coef = 0.15;
  EXPECT_NEAR(cfg.epsilon_for(10), 1.5, 1e-15);
  cfg.epsilon_abs = 0.7;
  EXPECT_EQ(cfg.epsilon_for(10), 0.7);
}

TEST(VrsObjectiveTest, FrozenPosteriorEqualToPriorMatchesReinforceReconstruction) {
  SelectionModel m = tiny_model(28);
  testing::copy_prior_onto_posterior(m);
  const Sequence x = seq({4, 5, 6, 7}), y = seq({8, kEosId});
  StrategyConfig cfg;
  cfg.lambda = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng r1(s), r2(s);
    auto [v, gv] = vrs_loss(m, x, y, cfg, r1);
    auto [r, gr] = loss_reinforce(m, x, y, cfg, r2);
    EXPECT_EQ(v.reconstruction, r.reconstruction);
    EXPECT_EQ(v.total, r.total);
  }
}

TEST(ReinforceTest, SaturatedPriorSamplesFullMask) {
  SelectionModel m = tiny_model(29);
  set_param(m, "prior.l2.w", 0.0);
  set_param(m, "prior.l2.b", 40.0);
  const Sequence x = seq({4, 5, 6}), y = seq({7, kEosId});
  StrategyConfig cfg;
  cfg.kind = StrategyKind::kReinforceSelect;
  cfg.lambda = 0.0;
  Rng rng(4);
  auto [b, g] = loss_reinforce(m, x, y, cfg, rng);
  EXPECT_NEAR(b.reconstruction, -log_likelihood(m, x, y, SelectionMask::ones(3)), 1e-15);
  EXPECT_NEAR(b.total, b.reconstruction, 1e-15);
}

TEST(PretrainTest, VrsPretrainSupervisesPosteriorOnly) {
  SelectionModel m = tiny_model(30);
  StrategyConfig cfg;
  const std::vector<TrainItem> batch{{seq({4, 5, 6}), seq({5, kEosId}), SelectionMask::parse("010")}};
  Rng rng(5);
  Tape t(&m.params());
  Objective o = vrs_objective(t, m, batch, cfg, Phase::kPretrain, rng);
  EXPECT_GT(o.parts.supervision, 0.0);
  EXPECT_NEAR(o.loss.scalar(), o.parts.total, 1e-12);
  GradientMap g = t.backward(o.loss);
  // Prior gradient comes from the KL with q held fixed.
  Tape t2(&m.params());
  EncoderStates h = m.encode(t2, batch[0].source);
  BernoulliTerms pr = bernoulli_terms(m.prior_logits(t2, h));
  BernoulliTerms po = bernoulli_terms(m.posterior_logits(t2, h, m.encode_target(t2, batch[0].target)));
  GradientMap kl = t2.backward(kl_truncated(detach(po), pr));
  const ParamId w = m.params().id("prior.l1.w");
  for (std::size_t k = 0; k < kl.at(w).size(); ++k) EXPECT_NEAR(g.at(w)[k], kl.at(w)[k], 1e-12);
  // Posterior gradient is the label fit only.
  GradientMap sup = [&] {
    Tape t3(&m.params());
    EncoderStates h3 = m.encode(t3, batch[0].source);
    BernoulliTerms po3 =
        bernoulli_terms(m.posterior_logits(t3, h3, m.encode_target(t3, batch[0].target)));
    return t3.backward(bce(po3, batch[0].labels));
  }();
  const ParamId q = m.params().id("post.l1.w");
  for (std::size_t k = 0; k < sup.at(q).size(); ++k) EXPECT_NEAR(g.at(q)[k], sup.at(q)[k], 1e-12);

  cfg.supervise_prior_in_pretrain = true;
  Rng rng2(5);
  Tape t4(&m.params());
  Objective o2 = vrs_objective(t4, m, batch, cfg, Phase::kPretrain, rng2);
  EXPECT_GT(o2.parts.supervision, o.parts.supervision);
}

TEST(StrategyTest, ReportedTotalEqualsLossValue) {
  SelectionModel m = tiny_model(31);
  const std::vector<TrainItem> batch{{seq({4, 5, 6}), seq({5, kEosId}), SelectionMask::parse("010")},
                                     {seq({7, 8}), seq({8, 7, kEosId}), SelectionMask::parse("11")}};
  for (StrategyKind kind : {StrategyKind::kBottomUp, StrategyKind::kSoftSelect,
                            StrategyKind::kReinforceSelect, StrategyKind::kVariational}) {
    for (Phase phase : {Phase::kPretrain, Phase::kJoint}) {
      StrategyConfig cfg;
      cfg.kind = kind;
      Rng rng(6);
      Tape t(&m.params());
      Objective o = strategy_objective(t, m, batch, cfg, phase, rng);
      EXPECT_NEAR(o.loss.scalar(), o.parts.total, 1e-10) << strategy_name(kind);
      EXPECT_NEAR(o.parts.total,
                  o.parts.reconstruction + o.parts.kl_term + o.parts.penalty + o.parts.supervision,
                  1e-10);
    }
  }
}

// ---------------------------------------------------------------------------
// gradient checks

std::vector<ParamId> all_ids(const ParamStore& ps) {
  std::vector<ParamId> ids;
  for (ParamId id = 0; id < ps.size(); ++id) ids.push_back(id);
  return ids;
}

TEST(GradientCheckTest, SoftSelectLossAllParameters) {
  SelectionModel m = tiny_model(32);
  ASSERT_LE(m.parameter_count(), 5000u);
  StrategyConfig cfg;
  cfg.kind = StrategyKind::kSoftSelect;
  cfg.alpha = 0.3;
  const std::vector<TrainItem> batch{{seq({4, 5, 6, 7}), seq({5, 8, kEosId}), {}}};
  LossBuilder build = [&](Tape& t) { return soft_select_objective(t, m, batch, cfg).loss; };
  EXPECT_LT(check_gradients(build, m.params(), 1e-5), 1e-4);
}

TEST(GradientCheckTest, ReconstructionTermAllParameters) {
  SelectionModel m = tiny_model(33);
  const Sequence x = seq({4, 5, 6, 7}), y = seq({5, 8, kEosId});
  const SelectionMask beta = SelectionMask::parse("0110");
  LossBuilder build = [&](Tape& t) {
    EncoderStates h = m.encode(t, x);
    return scale(m.log_likelihood(t, h, mask_var(t, beta), y), -1.0);
  };
  EXPECT_LT(check_gradients(build, m.params(), 1e-5), 1e-4);
}

TEST(GradientCheckTest, KlAndSupervisionTermsOnSelectors) {
  SelectionModel m = tiny_model(34);
  const Sequence x = seq({4, 5, 6}), y = seq({5, kEosId});
  std::vector<ParamId> selectors;
  for (ParamId id : all_ids(m.params()))
    if (m.params().partition(id) != Partition::kGenerator) selectors.push_back(id);
  LossBuilder build = [&](Tape& t) {
    EncoderStates h = m.encode(t, x);
    BernoulliTerms pr = bernoulli_terms(m.prior_logits(t, h));
    BernoulliTerms po = bernoulli_terms(m.posterior_logits(t, h, m.encode_target(t, y)));
    Var kl = scale(abs(add_scalar(kl_truncated(po, pr), -0.05)), 2.0);
    return add(kl, add(bce(po, SelectionMask::parse("011")), mask_log_prob(po, SelectionMask::parse("101"))));
  };
  const GradientMap analytic = analytic_gradients(build, m.params());
  const GradientMap numeric = numeric_gradients(build, m.params(), 1e-5, selectors);
  EXPECT_LT(compare_gradients(analytic, numeric), 1e-4);
}

// ---------------------------------------------------------------------------
// optimizer

TEST(AdamTest, FirstStepMovesByLearningRateAndClips) {
  ParamStore ps;
  ps.add("w", {3}, Partition::kGenerator);
  ps.add("untouched", {1}, Partition::kGenerator);
  ps.value(1)[0] = 0.25;
  OptimizerConfig cfg;
  cfg.weight_decay = 0.0;
  cfg.learning_rate = 0.01;
  Adam adam(ps, cfg);
  GradientMap g(&ps);
  g.set(0, Tensor::vector({2.0, -100.0, 0.0}));
  adam.step(g);
  EXPECT_NEAR(ps.value(0)[0], -0.01, 1e-9);
  EXPECT_NEAR(ps.value(0)[1], 0.01, 1e-9);
  EXPECT_EQ(ps.value(0)[2], 0.0);
  EXPECT_EQ(ps.value(1)[0], 0.25);
}

TEST(AdamTest, MatchesScalarRecurrence) {
  ParamStore ps;
  ps.add("w", {1}, Partition::kGenerator);
  ps.value(0)[0] = 1.0;
  OptimizerConfig cfg;
  Adam adam(ps, cfg);
  double w = 1.0, m = 0, v = 0;
  for (int t = 1; t <= 20; ++t) {
    const double grad = std::sin(t) * 3.0;
    GradientMap g(&ps);
    g.set(0, Tensor::vector({grad}));
    adam.step(g);
    const double gi = grad + cfg.weight_decay * w;
    m = 0.9 * m + 0.1 * gi;
    v = 0.999 * v + 0.001 * gi * gi;
    w -= cfg.learning_rate * (m / (1 - std::pow(0.9, t))) /
         (std::sqrt(v / (1 - std::pow(0.999, t))) + cfg.eps);
    EXPECT_NEAR(ps.value(0)[0], w, 1e-15);
  }
}

// ---------------------------------------------------------------------------
// trainer

data::Corpus small_corpus(std::size_t n, std::uint64_t seed, data::Vocabulary* vocab) {
  const data::Grammar g = data::default_grammar();
  *vocab = data::build_vocabulary(g);
  return data::generate_corpus(g, *vocab, n, seed);
}

ModelConfig smoke_model(std::size_t vocab) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.embed_dim = 8;
  c.hidden = 8;
  c.selector_hidden = 8;
  c.target_embed_dim = 8;
  c.target_hidden = 8;
  c.dropout = 0.1;
  return c;
}

TrainConfig smoke_config(StrategyKind kind) {
  TrainConfig tc;
  tc.strategy.kind = kind;
  tc.optimizer.learning_rate = 5e-3;
  tc.schedule.max_steps = 50;
  tc.schedule.batch_size = 4;
  tc.schedule.eval_every = 10;
  tc.schedule.eval_examples = 8;
  tc.schedule.pretrain_max_steps = 30;
  tc.seed = 7;
  return tc;
}

std::vector<nlohmann::json> records(const std::string& log) {
  std::vector<nlohmann::json> out;
  std::istringstream in(log);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  return out;
}

std::string run_training(StrategyKind kind, const data::Corpus& train, const data::Corpus& valid,
                         const data::Vocabulary& vocab, TrainConfig tc = {}) {
  if (tc.schedule.max_steps == ScheduleConfig{}.max_steps) tc = smoke_config(kind);
  SelectionModel m(smoke_model(vocab.size()));
  m.initialize(derive_seed(tc.seed, 0));
  Trainer trainer(m, vocab, tc);
  std::ostringstream log;
  trainer.train(train, valid, &log);
  return log.str();
}

TEST(TrainerTest, SameSeedGivesIdenticalLogs) {
  data::Vocabulary vocab;
  const data::Corpus train = small_corpus(40, 1, &vocab), valid = small_corpus(8, 2, &vocab);
  for (StrategyKind kind : {StrategyKind::kVariational, StrategyKind::kSoftSelect}) {
    const std::string a = run_training(kind, train, valid, vocab);
    const std::string b = run_training(kind, train, valid, vocab);
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, b);
  }
}

TEST(TrainerTest, LogRecordsCarryTheDocumentedFields) {
  data::Vocabulary vocab;
  const data::Corpus train = small_corpus(40, 1, &vocab), valid = small_corpus(8, 2, &vocab);
  const auto recs = records(run_training(StrategyKind::kVariational, train, valid, vocab));
  bool switched = false;
  std::size_t evals = 0;
  for (const auto& r : recs) {
    if (r.contains("event")) {
      EXPECT_EQ(r["event"], "phase_switch");
      switched = true;
      continue;
    }
    ++evals;
    for (const char* key : {"step", "phase", "train", "valid_bound", "valid_kl", "entropy",
                            "selecting_ratio"})
      EXPECT_TRUE(r.contains(key)) << key;
    EXPECT_FALSE(r.contains("wall_time"));
    for (const char* key : {"total", "reconstruction", "kl", "penalty", "control_variate"})
      EXPECT_TRUE(r["train"].contains(key)) << key;
    EXPECT_EQ(r["phase"], switched ? "joint" : "pretrain");
  }
  EXPECT_EQ(evals, 5u);
  EXPECT_TRUE(switched);
}

TEST(TrainerTest, TrainingLossDecreasesOverFirstEvaluations) {
  data::Vocabulary vocab;
  const data::Corpus train = small_corpus(200, 3, &vocab), valid = small_corpus(16, 4, &vocab);
  TrainConfig tc = smoke_config(StrategyKind::kBottomUp);
  tc.schedule.max_steps = 100;
  tc.schedule.eval_every = 20;
  const auto recs = records(run_training(StrategyKind::kBottomUp, train, valid, vocab, tc));
  ASSERT_EQ(recs.size(), 5u);
  EXPECT_LT(recs.back()["train"]["total"].get<double>(), recs.front()["train"]["total"].get<double>());
  EXPECT_LT(recs.back()["valid_bound"].get<double>(), recs.front()["valid_bound"].get<double>());
}

TEST(TrainerTest, UnconstrainedVrsHasNoKlPressureInJointPhase) {
  data::Vocabulary vocab;
  const data::Corpus train = small_corpus(40, 1, &vocab), valid = small_corpus(8, 2, &vocab);
  TrainConfig tc = smoke_config(StrategyKind::kVariational);
  tc.strategy.lambda = 0.0;
  tc.strategy.epsilon_abs = 0.0;
  for (const auto& r : records(run_training(StrategyKind::kVariational, train, valid, vocab, tc))) {
    if (r.contains("phase") && r["phase"] == "joint" && r.contains("train")) {
      EXPECT_EQ(r["train"]["kl_term"].get<double>(), 0.0);
    }
  }
}

TEST(TrainerTest, NonFiniteLossAborts) {
  data::Vocabulary vocab;
  const data::Corpus train = small_corpus(10, 1, &vocab);
  SelectionModel m(smoke_model(vocab.size()));
  m.initialize(1);
  m.params().value(m.params().id("gen.out.b"))[5] = NAN;
  Trainer trainer(m, vocab, smoke_config(StrategyKind::kBottomUp));
  EXPECT_THROW(trainer.train(train, {}, nullptr), NonFiniteLoss);
}

TEST(TrainerTest, EmptyCorpusRejected) {
  data::Vocabulary vocab;
  small_corpus(1, 1, &vocab);
  SelectionModel m(smoke_model(vocab.size()));
  Trainer trainer(m, vocab, smoke_config(StrategyKind::kBottomUp));
  EXPECT_THROW(trainer.train({}, {}, nullptr), Error);
}

// ---------------------------------------------------------------------------
// config

TEST(TrainConfigTest, JsonRoundTripAndUnknownKeys) {
  StrategyConfig s;
  s.kind = StrategyKind::kReinforceSelect;
  s.alpha = 0.4;
  s.epsilon_abs = 1.5;
  const StrategyConfig back = strategy_from_json(to_json(s));
  EXPECT_EQ(back.kind, s.kind);
  EXPECT_EQ(back.alpha, 0.4);
  EXPECT_EQ(back.epsilon_abs, 1.5);
  EXPECT_THROW(strategy_from_json({{"kind", "vrs"}, {"bogus", 1}}), ConfigError);
  EXPECT_THROW(strategy_from_json({{"kind", "nope"}}), ConfigError);
  EXPECT_THROW(optimizer_from_json({{"lr", 1}}), ConfigError);
  EXPECT_THROW(schedule_from_json({{"max_step", 1}}), ConfigError);
  const OptimizerConfig o;
  EXPECT_EQ(o.learning_rate, 5e-4);
  EXPECT_EQ(o.beta1, 0.9);
  EXPECT_EQ(o.beta2, 0.999);
  EXPECT_EQ(o.eps, 1e-8);
  EXPECT_EQ(o.weight_decay, 1.2e-6);
  EXPECT_EQ(o.clip, 5.0);
}

}  // namespace
}  // namespace selectgen
