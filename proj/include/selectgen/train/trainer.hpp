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

// Mini-batch training loop: an optional pretraining phase on distant
// supervision, switched to joint training once the held-out bound stops
// improving, with a line-delimited JSON metrics log.

#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "selectgen/core/errors.hpp"
#include "selectgen/core/rng.hpp"
#include "selectgen/core/tape.hpp"
#include "selectgen/data/corpus.hpp"
#include "selectgen/data/vocabulary.hpp"
#include "selectgen/eval/metrics.hpp"
#include "selectgen/model/inference.hpp"
#include "selectgen/model/model.hpp"
#include "selectgen/train/adam.hpp"
#include "selectgen/train/config.hpp"
#include "selectgen/train/heuristics.hpp"
#include "selectgen/train/objectives.hpp"

namespace selectgen {

struct HeldOutStats {
  double bound = 0.0;  // mean negated bound, lower is better
  double kl = 0.0;
  double entropy = 0.0;
  double ratio = 0.0;  // mean prior probability over selectable tokens
};

// Held-out score of the strategy's own objective: the negated bound for
// the variational strategy, the sampled-mask NLL for reinforce-select, and
// the NLL under the mask the strategy trains with otherwise. Dropout off,
// rng seeded by the caller.
inline HeldOutStats held_out_stats(const SelectionModel& model, const data::Corpus& set,
                                   std::size_t limit, StrategyKind kind, std::uint64_t seed) {
  HeldOutStats s;
  const std::size_t n = std::min(limit, set.size());
  if (n == 0) return s;
  for (std::size_t i = 0; i < n; ++i) {
    const data::Example& ex = set[i];
    Rng rng(derive_seed(seed, i));
    const BernoulliVector gamma = prior(model, ex.source);
    s.entropy += eval::selector_entropy(gamma, ex.source.ids);
    double ratio = 0.0;
    for (double g : gamma.probs) ratio += g;
    s.ratio += ratio / static_cast<double>(gamma.size());
    switch (kind) {
      case StrategyKind::kVariational: {
        const LossBreakdown b = elbo(model, ex.source, ex.target, rng);
        s.bound += b.total;
        s.kl += b.kl;
        break;
      }
      case StrategyKind::kReinforceSelect:
        s.bound -= log_likelihood(model, ex.source, ex.target, sample_mask(gamma, rng));
        break;
      case StrategyKind::kSoftSelect:
        s.bound -= log_likelihood(model, ex.source, ex.target, gamma.probs);
        break;
      case StrategyKind::kBottomUp:
        s.bound -= log_likelihood(model, ex.source, ex.target, SelectionMask::ones(ex.source.size()));
        break;
    }
  }
  const double inv = 1.0 / static_cast<double>(n);
  s.bound *= inv;
  s.kl *= inv;
  s.entropy *= inv;
  s.ratio *= inv;
  return s;
}

struct TrainResult {
  std::size_t steps = 0;
  std::size_t switch_step = 0;  // 0 when the run had no pretraining phase switch
  HeldOutStats final_stats;
};

class Trainer {
 public:
  Trainer(SelectionModel& model, const data::Vocabulary& vocab, TrainConfig cfg)
      : model_(model), vocab_(vocab), cfg_(std::move(cfg)), adam_(model.params(), cfg_.optimizer) {}

  TrainResult train(const data::Corpus& train, const data::Corpus& valid, std::ostream* log) {
    if (train.empty()) throw Error("training corpus is empty");
    const auto start = std::chrono::steady_clock::now();
    Rng order_rng(derive_seed(cfg_.seed, 1));
    Rng sample_rng(derive_seed(cfg_.seed, 2));
    Rng dropout_rng(derive_seed(cfg_.seed, 3));
    const Dropout drop{model_.config().dropout, &dropout_rng};
    const StrategyConfig& strat = cfg_.strategy;
    const ScheduleConfig& sched = cfg_.schedule;

    std::vector<TrainItem> items;
    items.reserve(train.size());
    for (const auto& ex : train) items.push_back(TrainItem{ex.source, ex.target, {}});
    const bool static_labels = strat.heuristic == HeuristicMode::kOverlap;
    if (static_labels)
      for (auto& it : items) it.labels = label(it);

    Phase phase = strat.has_pretrain() ? Phase::kPretrain : Phase::kJoint;
    double best = std::numeric_limits<double>::infinity();
    std::size_t bad = 0;
    TrainResult result;
    LossBreakdown interval;
    std::size_t interval_steps = 0;
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();
    std::vector<TrainItem> batch;

    for (std::size_t step = 1; step <= sched.max_steps; ++step) {
      batch.clear();
      for (std::size_t b = 0; b < sched.batch_size; ++b) {
        if (cursor == order.size()) {
          order_rng.shuffle(order.begin(), order.end());
          cursor = 0;
        }
        batch.push_back(items[order[cursor++]]);
        if (!static_labels) batch.back().labels = label(batch.back());
      }
      Tape tape(&model_.params());
      Objective obj = strategy_objective(tape, model_, std::span<const TrainItem>(batch), strat,
                                         phase, sample_rng, drop);
      if (!std::isfinite(obj.loss.scalar()))
        throw NonFiniteLoss("non-finite loss at step " + std::to_string(step) + " (" +
                            phase_name(phase) + "): " + obj.parts.to_json().dump());
      GradientMap grads;
      try {
        grads = tape.backward(obj.loss);
      } catch (const NonFiniteGradient& e) {
        throw NonFiniteLoss("non-finite gradient at step " + std::to_string(step) + " (" +
                            phase_name(phase) + "): " + e.what() + " " + obj.parts.to_json().dump());
      }
      adam_.step(grads);
      if (const auto bad = model_.params().first_non_finite())
        throw NonFiniteLoss("parameter '" + *bad + "' became non-finite at step " +
                            std::to_string(step));
      interval += obj.parts;
      ++interval_steps;
      result.steps = step;

      if (step % sched.eval_every != 0 && step != sched.max_steps) continue;
      const HeldOutStats stats =
          held_out_stats(model_, valid.empty() ? train : valid, sched.eval_examples, strat.kind,
                         sched.eval_seed);
      result.final_stats = stats;
      nlohmann::json rec{{"step", step},
                         {"phase", phase_name(phase)},
                         {"train", interval.scaled(1.0 / static_cast<double>(interval_steps)).to_json()},
                         {"valid_bound", stats.bound},
                         {"valid_kl", stats.kl},
                         {"entropy", stats.entropy},
                         {"selecting_ratio", stats.ratio}};
      if (sched.log_wall_time)
        rec["wall_time"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (log) *log << rec.dump() << "\n";
      interval = {};
      interval_steps = 0;

      if (phase != Phase::kPretrain) continue;
      if (stats.bound < best) {
        best = stats.bound;
        bad = 0;
      } else {
        ++bad;
      }
      if (bad >= sched.pretrain_patience || step >= sched.pretrain_max_steps) {
        phase = Phase::kJoint;
        result.switch_step = step;
        if (log)
          *log << nlohmann::json{{"step", step}, {"event", "phase_switch"}, {"phase", "joint"}}.dump()
               << "\n";
      }
    }
    if (log) log->flush();
    return result;
  }

 private:
  SelectionMask label(const TrainItem& it) const {
    const Tensor* emb =
        cfg_.strategy.heuristic == HeuristicMode::kEmbeddingNearest
            ? &model_.params().value(model_.params().id("gen.src_embed"))
            : nullptr;
    return heuristic_labels(it.source, it.target, cfg_.strategy.heuristic, vocab_, emb);
  }

  SelectionModel& model_;
  const data::Vocabulary& vocab_;
  TrainConfig cfg_;
  Adam adam_;
};

}  // namespace selectgen
