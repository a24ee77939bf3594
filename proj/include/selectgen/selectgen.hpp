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

// Umbrella header for the library (the HTTP binding in
// interface/server.hpp is included separately).

#pragma once

#include "selectgen/core/errors.hpp"
#include "selectgen/core/gradcheck.hpp"
#include "selectgen/core/ops.hpp"
#include "selectgen/core/rng.hpp"
#include "selectgen/core/tape.hpp"
#include "selectgen/core/tensor.hpp"
#include "selectgen/data/corpus.hpp"
#include "selectgen/data/grammar.hpp"
#include "selectgen/data/tokenize.hpp"
#include "selectgen/data/vocabulary.hpp"
#include "selectgen/eval/battery.hpp"
#include "selectgen/eval/metrics.hpp"
#include "selectgen/eval/report.hpp"
#include "selectgen/interface/run_config.hpp"
#include "selectgen/interface/service.hpp"
#include "selectgen/model/checkpoint.hpp"
#include "selectgen/model/config.hpp"
#include "selectgen/model/inference.hpp"
#include "selectgen/model/model.hpp"
#include "selectgen/train/adam.hpp"
#include "selectgen/train/config.hpp"
#include "selectgen/train/enumeration.hpp"
#include "selectgen/train/heuristics.hpp"
#include "selectgen/train/objectives.hpp"
#include "selectgen/train/trainer.hpp"
#include "selectgen/types.hpp"
