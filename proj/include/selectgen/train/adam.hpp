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

// Adam with elementwise gradient clipping and L2 weight decay.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "selectgen/core/tape.hpp"
#include "selectgen/train/config.hpp"

namespace selectgen {

class Adam {
 public:
  Adam(ParamStore& params, OptimizerConfig cfg) : params_(params), cfg_(cfg) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (ParamId id = 0; id < params.size(); ++id) {
      m_[id].assign(params.value(id).size(), 0.0);
      v_[id].assign(params.value(id).size(), 0.0);
    }
  }

  std::size_t steps() const noexcept { return t_; }

  // Descends `grads`. Parameters absent from the map take no step, so their
  // moments and weights are left untouched.
  void step(const GradientMap& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const double lr = cfg_.learning_rate;
    for (const auto& [id, g] : grads.entries()) {
      auto w = params_.value(id).values();
      auto& m = m_[id];
      auto& v = v_[id];
      const auto gv = g.values();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = std::clamp(gv[i], -cfg_.clip, cfg_.clip) + cfg_.weight_decay * w[i];
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
      }
    }
  }

 private:
  ParamStore& params_;
  OptimizerConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace selectgen
