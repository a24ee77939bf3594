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

// Bi-LSTM encoder, prior and posterior selector heads, and an LSTM decoder
// whose attention and initial state see only the selected source positions.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "selectgen/core/ops.hpp"
#include "selectgen/core/rng.hpp"
#include "selectgen/core/tape.hpp"
#include "selectgen/model/config.hpp"
#include "selectgen/types.hpp"

namespace selectgen {

// Training-time dropout; a null rng (or rate 0) disables it.
struct Dropout {
  double rate = 0.0;
  Rng* rng = nullptr;

  Var apply(Var v) const { return (rng && rate > 0) ? dropout(v, rate, *rng) : v; }
};

struct EncoderStates {
  Var matrix;             // [n, 2 * hidden]
  std::vector<Var> rows;  // h_1 .. h_n
  std::vector<TokenId> ids;

  std::size_t size() const noexcept { return rows.size(); }
};

struct DecoderState {
  Var h;
  Var c;
  Var attention;  // weights of the last step; invalid before the first step
  Var context;
};

struct StepOutput {
  Var logits;
  DecoderState state;
};

class SelectionModel {
 public:
  explicit SelectionModel(ModelConfig cfg) : cfg_(cfg) { register_params(); }

  SelectionModel(const SelectionModel&) = delete;
  SelectionModel& operator=(const SelectionModel&) = delete;
  SelectionModel(SelectionModel&&) = default;

  const ModelConfig& config() const noexcept { return cfg_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }

  // Uniform(-init_scale, init_scale) weights, zero biases, forget-gate bias 1.
  void initialize(std::uint64_t seed) {
    Rng rng(seed);
    for (ParamId id = 0; id < params_.size(); ++id) {
      Tensor& w = params_.value(id);
      const std::string& name = params_.name(id);
      const bool bias = name.size() > 2 && name.compare(name.size() - 2, 2, ".b") == 0;
      for (double& v : w.values()) v = bias ? 0.0 : rng.uniform(-cfg_.init_scale, cfg_.init_scale);
    }
    for (const Lstm* l : {&enc_fwd_, &enc_bwd_, &dec_, &tgt_fwd_, &tgt_bwd_}) {
      Tensor& b = params_.value(l->b);
      for (std::size_t i = l->hidden; i < 2 * l->hidden; ++i) b[i] = 1.0;
    }
  }

  void zero_parameters() {
    for (ParamId id = 0; id < params_.size(); ++id)
      for (double& v : params_.value(id).values()) v = 0.0;
  }

  // --- encoder -------------------------------------------------------------

  EncoderStates encode(Tape& t, const Sequence& x, const Dropout& drop = {}) const {
    if (x.empty()) throw Error("encode: empty source sequence");
    const std::size_t n = x.size();
    Var table = t.param(src_embed_);
    std::vector<Var> inputs;
    inputs.reserve(n);
    for (TokenId id : x.ids) inputs.push_back(drop.apply(embedding(table, id)));
    auto fwd = run_lstm(t, enc_fwd_, inputs, /*reverse=*/false);
    auto bwd = run_lstm(t, enc_bwd_, inputs, /*reverse=*/true);
    EncoderStates out;
    out.ids = x.ids;
    out.rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.rows.push_back(concat({fwd[i], bwd[i]}));
    out.matrix = stack_rows(out.rows);
    return out;
  }

  // --- selectors -----------------------------------------------------------

  // Clamped selection logits. By default the head reads detached encoder
  // states, so selector losses never reach the encoder; soft selection,
  // where gamma gates the decoder directly, passes through_encoder.
  Var prior_logits(Tape& t, const EncoderStates& h, bool through_encoder = false) const {
    std::vector<Var> logits;
    logits.reserve(h.size());
    for (const Var& row : h.rows)
      logits.push_back(mlp_logit(t, prior_, through_encoder ? row : detach(row)));
    return pin_reserved(t, h, clamp(concat(logits), -kLogitClamp, kLogitClamp));
  }

  Var prior_probs(Tape& t, const EncoderStates& h, bool through_encoder = false) const {
    return sigmoid(prior_logits(t, h, through_encoder));
  }

  // e(y): final forward state and final backward state of a bi-LSTM over Y.
  Var encode_target(Tape& t, const Sequence& y, const Dropout& drop = {}) const {
    if (y.empty()) throw Error("encode_target: empty target sequence");
    Var table = t.param(tgt_embed_post_);
    std::vector<Var> inputs;
    inputs.reserve(y.size());
    for (TokenId id : y.ids) inputs.push_back(drop.apply(embedding(table, id)));
    auto fwd = run_lstm(t, tgt_fwd_, inputs, false);
    auto bwd = run_lstm(t, tgt_bwd_, inputs, true);
    return concat({fwd.back(), bwd.front()});
  }

  // sigma(MLP([h_i ; e(y)])) logits, clamped.
  Var posterior_logits(Tape& t, const EncoderStates& h, Var target_encoding) const {
    std::vector<Var> logits;
    logits.reserve(h.size());
    for (const Var& row : h.rows)
      logits.push_back(mlp_logit(t, post_, concat({detach(row), target_encoding})));
    return pin_reserved(t, h, clamp(concat(logits), -kLogitClamp, kLogitClamp));
  }

  Var posterior_probs(Tape& t, const EncoderStates& h, Var target_encoding) const {
    return sigmoid(posterior_logits(t, h, target_encoding));
  }

  // --- decoder -------------------------------------------------------------

  // d_0 = tanh(W pool(beta, h) + b). The pool divides by n (or by the
  // selected mass under PoolNorm::kSelectedCount).
  DecoderState init_decoder(Tape& t, const EncoderStates& h, Var mask) const {
    if (mask.size() != h.size()) throw Error("init_decoder: mask length does not match source");
    Var pooled;
    if (cfg_.pool_norm == PoolNorm::kSourceLength) {
      pooled = mean_pool(h.matrix, mask, static_cast<double>(h.size()));
    } else {
      pooled = scale_by(mean_pool(h.matrix, mask, 1.0), reciprocal(sum(mask)));
    }
    DecoderState s;
    s.h = tanh(affine(t.param(init_w_), pooled, t.param(init_b_)));
    s.c = t.constant(Tensor(Shape{cfg_.hidden}));
    return s;
  }

  // Attention with the general bilinear score h_i^T W d, masked by `mask`.
  std::pair<Var, Var> attend(Tape& t, Var d, const EncoderStates& h, Var mask) const {
    Var u = matvec(t.param(att_w_), d);
    Var scores = matvec(h.matrix, u);
    Var alpha = masked_softmax(scores, mask);
    Var context = matvec_t(h.matrix, alpha);
    return {context, alpha};
  }

  StepOutput decode_step(Tape& t, const DecoderState& state, TokenId prev, const EncoderStates& h,
                         Var mask, const Dropout& drop = {}) const {
    Var x = drop.apply(embedding(t.param(dec_embed_), prev));
    auto [hn, cn] = lstm_step(t, dec_, x, state.h, state.c);
    auto [context, alpha] = attend(t, hn, h, mask);
    Var combined = drop.apply(tanh(affine(t.param(comb_w_), concat({context, hn}), t.param(comb_b_))));
    StepOutput out;
    out.logits = affine(t.param(out_w_), combined, t.param(out_b_));
    out.state = DecoderState{hn, cn, alpha, context};
    return out;
  }

  // sum_t log p(y_t | y_<t, X, beta), teacher forced; y must end in </s>.
  Var log_likelihood(Tape& t, const EncoderStates& h, Var mask, const Sequence& y,
                     const Dropout& drop = {}) const {
    if (y.empty()) throw Error("log_likelihood: empty target");
    DecoderState s = init_decoder(t, h, mask);
    std::vector<Var> nll;
    nll.reserve(y.size());
    TokenId prev = kBosId;
    for (TokenId tok : y.ids) {
      StepOutput step = decode_step(t, s, prev, h, mask, drop);
      nll.push_back(cross_entropy(step.logits, tok));
      s = step.state;
      prev = tok;
    }
    return scale(sum(concat(nll)), -1.0);
  }

  std::size_t parameter_count() const { return params_.parameter_count(); }

 private:
  struct Lstm {
    ParamId w = 0, b = 0;
    std::size_t hidden = 0;
  };
  struct Mlp {
    ParamId w1 = 0, b1 = 0, w2 = 0, b2 = 0;
  };

  void register_params() {
    const auto V = cfg_.vocab_size, E = cfg_.embed_dim, H = cfg_.hidden;
    const auto S = cfg_.selector_hidden, TE = cfg_.target_embed_dim, TH = cfg_.target_hidden;
    if (V <= kNumReserved) throw Error("model vocabulary is too small");
    const auto G = Partition::kGenerator, P = Partition::kPriorSelector,
               Q = Partition::kPosteriorSelector;
    src_embed_ = params_.add("gen.src_embed", {V, E}, G);
    enc_fwd_ = add_lstm("gen.enc_fwd", E, H, G);
    enc_bwd_ = add_lstm("gen.enc_bwd", E, H, G);
    init_w_ = params_.add("gen.init.w", {H, 2 * H}, G);
    init_b_ = params_.add("gen.init.b", {H}, G);
    dec_embed_ = params_.add("gen.dec_embed", {V, E}, G);
    dec_ = add_lstm("gen.dec", E, H, G);
    att_w_ = params_.add("gen.att.w", {2 * H, H}, G);
    comb_w_ = params_.add("gen.comb.w", {H, 3 * H}, G);
    comb_b_ = params_.add("gen.comb.b", {H}, G);
    out_w_ = params_.add("gen.out.w", {V, H}, G);
    out_b_ = params_.add("gen.out.b", {V}, G);
    prior_ = add_mlp("prior", 2 * H, S, P);
    tgt_embed_post_ = params_.add("post.embed", {V, TE}, Q);
    tgt_fwd_ = add_lstm("post.enc_fwd", TE, TH, Q);
    tgt_bwd_ = add_lstm("post.enc_bwd", TE, TH, Q);
    post_ = add_mlp("post", 2 * H + 2 * TH, S, Q);
  }

  Lstm add_lstm(const std::string& prefix, std::size_t in, std::size_t hidden, Partition p) {
    Lstm l;
    l.w = params_.add(prefix + ".w", {4 * hidden, in + hidden}, p);
    l.b = params_.add(prefix + ".b", {4 * hidden}, p);
    l.hidden = hidden;
    return l;
  }

  Mlp add_mlp(const std::string& prefix, std::size_t in, std::size_t hidden, Partition p) {
    Mlp m;
    m.w1 = params_.add(prefix + ".l1.w", {hidden, in}, p);
    m.b1 = params_.add(prefix + ".l1.b", {hidden}, p);
    m.w2 = params_.add(prefix + ".l2.w", {1, hidden}, p);
    m.b2 = params_.add(prefix + ".l2.b", {1}, p);
    return m;
  }

  Var mlp_logit(Tape& t, const Mlp& m, Var in) const {
    Var z = tanh(affine(t.param(m.w1), in, t.param(m.b1)));
    return affine(t.param(m.w2), z, t.param(m.b2));
  }

  // Overwrites logits of padding / end-of-sequence positions with the
  // constant that maps to kReservedProb.
  Var pin_reserved(Tape& t, const EncoderStates& h, Var logits) const {
    bool any = false;
    for (TokenId id : h.ids) any = any || is_unselectable(id);
    if (!any) return logits;
    const double pinned = std::log(kReservedProb / (1.0 - kReservedProb));
    std::vector<double> keep(h.size()), fill(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
      keep[i] = is_unselectable(h.ids[i]) ? 0.0 : 1.0;
      fill[i] = is_unselectable(h.ids[i]) ? pinned : 0.0;
    }
    return add(mul(logits, t.constant(std::move(keep))), t.constant(std::move(fill)));
  }

  std::pair<Var, Var> lstm_step(Tape& t, const Lstm& l, Var x, Var h, Var c) const {
    const std::size_t H = l.hidden;
    Var gates = affine(t.param(l.w), concat({x, h}), t.param(l.b));
    Var i = sigmoid(slice(gates, 0, H));
    Var f = sigmoid(slice(gates, H, H));
    Var g = tanh(slice(gates, 2 * H, H));
    Var o = sigmoid(slice(gates, 3 * H, H));
    Var cn = add(mul(f, c), mul(i, g));
    Var hn = mul(o, tanh(cn));
    return {hn, cn};
  }

  std::vector<Var> run_lstm(Tape& t, const Lstm& l, const std::vector<Var>& inputs,
                            bool reverse) const {
    const std::size_t n = inputs.size();
    std::vector<Var> out(n);
    Var h = t.constant(Tensor(Shape{l.hidden}));
    Var c = t.constant(Tensor(Shape{l.hidden}));
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = reverse ? n - 1 - k : k;
      std::tie(h, c) = lstm_step(t, l, inputs[i], h, c);
      out[i] = h;
    }
    return out;
  }

  ModelConfig cfg_;
  ParamStore params_;
  ParamId src_embed_ = 0, init_w_ = 0, init_b_ = 0, dec_embed_ = 0, att_w_ = 0;
  ParamId comb_w_ = 0, comb_b_ = 0, out_w_ = 0, out_b_ = 0, tgt_embed_post_ = 0;
  Lstm enc_fwd_, enc_bwd_, dec_, tgt_fwd_, tgt_bwd_;
  Mlp prior_, post_;
};

// Hard or soft selection weights as a constant node.
inline Var mask_var(Tape& t, const SelectionMask& m) { return t.constant(m.as_weights()); }
inline Var mask_var(Tape& t, const std::vector<double>& soft) { return t.constant(soft); }

}  // namespace selectgen
