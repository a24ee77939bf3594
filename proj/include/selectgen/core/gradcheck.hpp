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

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "selectgen/core/tape.hpp"

namespace selectgen {

// Builds a scalar loss on a fresh tape bound to the parameter store.
using LossBuilder = std::function<Var(Tape&)>;

inline GradientMap analytic_gradients(const LossBuilder& build, const ParamStore& params) {
  Tape tape(&params);
  Var loss = build(tape);
  return tape.backward(loss);
}

inline double evaluate_loss(const LossBuilder& build, const ParamStore& params) {
  Tape tape(&params, /*grad_enabled=*/false);
  return build(tape).scalar();
}

// Central differences for every coordinate of every parameter (or of the
// listed ones). Coordinates are restored exactly after each probe.
inline GradientMap numeric_gradients(const LossBuilder& build, ParamStore& params,
                                     double step,
                                     const std::vector<ParamId>& only = {}) {
  if (!(step >= 1e-7 && step <= 1e-3))
    throw std::invalid_argument("finite-difference step must lie in [1e-7, 1e-3]");
  std::vector<ParamId> ids = only;
  if (ids.empty())
    for (ParamId id = 0; id < params.size(); ++id) ids.push_back(id);
  GradientMap out(&params);
  for (ParamId id : ids) {
    Tensor& w = params.value(id);
    Tensor g(w.shape());
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double saved = w[k];
      w[k] = saved + step;
      const double up = evaluate_loss(build, params);
      w[k] = saved - step;
      const double down = evaluate_loss(build, params);
      w[k] = saved;
      g[k] = (up - down) / (2.0 * step);
    }
    out.set(id, std::move(g));
  }
  return out;
}

// max |analytic - numeric| / max(1, |numeric|) over the numeric keys; a
// parameter missing from `analytic` counts as a zero gradient.
inline double compare_gradients(const GradientMap& analytic, const GradientMap& numeric) {
  double worst = 0.0;
  for (const auto& [id, num] : numeric.entries()) {
    const Tensor* ana = analytic.contains(id) ? &analytic.at(id) : nullptr;
    for (std::size_t k = 0; k < num.size(); ++k) {
      const double a = ana ? (*ana)[k] : 0.0;
      const double err = std::fabs(a - num[k]) / std::max(1.0, std::fabs(num[k]));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

inline double check_gradients(const LossBuilder& build, ParamStore& params, double step) {
  const GradientMap analytic = analytic_gradients(build, params);
  const GradientMap numeric = numeric_gradients(build, params, step);
  return compare_gradients(analytic, numeric);
}

}  // namespace selectgen
