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

// Differentiable primitives recorded on a Tape. Each op computes its value
// eagerly and registers a closure that adds its vector-Jacobian product into
// the gradient slots of the inputs that need one.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "selectgen/core/errors.hpp"
#include "selectgen/core/rng.hpp"
#include "selectgen/core/tape.hpp"
#include "selectgen/core/tensor.hpp"

namespace selectgen {

namespace detail {

inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

inline void check_same_size(const Var& a, const Var& b, const char* op) {
  if (a.size() != b.size())
    throw std::invalid_argument(std::string(op) + ": size mismatch " +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
}

inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <class F>
Var unary(Var a, Tensor out, F dfdx_times_g) {
  Tape& t = *a.tape();
  const auto ia = a.id();
  return t.record(std::move(out), {a}, [ia, dfdx_times_g](Tape& t, std::uint32_t self) {
    double* ga = t.grad_if(ia);
    if (!ga) return;
    const auto& g = t.grad(self);
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    for (std::size_t i = 0; i < g.size(); ++i)
      ga[i] += dfdx_times_g(x[i], y[i], g[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

// W x for W of shape [r, c] and x of length c.
inline Var matvec(Var w, Var x) {
  Tape& t = *w.tape();
  const Tensor& W = w.value();
  const Tensor& X = x.value();
  if (W.rank() != 2 || W.cols() != X.size())
    throw std::invalid_argument("matvec: shape mismatch");
  const std::size_t r = W.rows(), c = W.cols();
  Tensor out(Shape{r});
  for (std::size_t i = 0; i < r; ++i)
    out[i] = detail::dot(W.data() + i * c, X.data(), c);
  const auto iw = w.id(), ix = x.id();
  return t.record(std::move(out), {w, x}, [iw, ix, r, c](Tape& t, std::uint32_t self) {
    const double* g = t.grad(self).data();
    const Tensor& W = t.value(iw);
    const Tensor& X = t.value(ix);
    if (double* gw = t.grad_if(iw))
      for (std::size_t i = 0; i < r; ++i)
        if (g[i] != 0.0) detail::axpy(g[i], X.data(), gw + i * c, c);
    if (double* gx = t.grad_if(ix))
      for (std::size_t i = 0; i < r; ++i)
        if (g[i] != 0.0) detail::axpy(g[i], W.data() + i * c, gx, c);
  });
}

// W^T x for W of shape [r, c] and x of length r.
inline Var matvec_t(Var w, Var x) {
  Tape& t = *w.tape();
  const Tensor& W = w.value();
  const Tensor& X = x.value();
  if (W.rank() != 2 || W.rows() != X.size())
    throw std::invalid_argument("matvec_t: shape mismatch");
  const std::size_t r = W.rows(), c = W.cols();
  Tensor out(Shape{c});
  for (std::size_t i = 0; i < r; ++i)
    if (X[i] != 0.0) detail::axpy(X[i], W.data() + i * c, out.data(), c);
  const auto iw = w.id(), ix = x.id();
  return t.record(std::move(out), {w, x}, [iw, ix, r, c](Tape& t, std::uint32_t self) {
    const double* g = t.grad(self).data();
    const Tensor& W = t.value(iw);
    const Tensor& X = t.value(ix);
    if (double* gw = t.grad_if(iw))
      for (std::size_t i = 0; i < r; ++i)
        if (X[i] != 0.0) detail::axpy(X[i], g, gw + i * c, c);
    if (double* gx = t.grad_if(ix))
      for (std::size_t i = 0; i < r; ++i) gx[i] += detail::dot(W.data() + i * c, g, c);
  });
}

// W x + b, fused.
inline Var affine(Var w, Var x, Var b) {
  Tape& t = *w.tape();
  const Tensor& W = w.value();
  const Tensor& X = x.value();
  const Tensor& B = b.value();
  if (W.rank() != 2 || W.cols() != X.size() || W.rows() != B.size())
    throw std::invalid_argument("affine: shape mismatch");
  const std::size_t r = W.rows(), c = W.cols();
  Tensor out(Shape{r});
  for (std::size_t i = 0; i < r; ++i)
    out[i] = detail::dot(W.data() + i * c, X.data(), c) + B[i];
  const auto iw = w.id(), ix = x.id(), ib = b.id();
  return t.record(std::move(out), {w, x, b}, [iw, ix, ib, r, c](Tape& t, std::uint32_t self) {
    const double* g = t.grad(self).data();
    const Tensor& W = t.value(iw);
    const Tensor& X = t.value(ix);
    if (double* gw = t.grad_if(iw))
      for (std::size_t i = 0; i < r; ++i)
        if (g[i] != 0.0) detail::axpy(g[i], X.data(), gw + i * c, c);
    if (double* gx = t.grad_if(ix))
      for (std::size_t i = 0; i < r; ++i)
        if (g[i] != 0.0) detail::axpy(g[i], W.data() + i * c, gx, c);
    if (double* gb = t.grad_if(ib))
      for (std::size_t i = 0; i < r; ++i) gb[i] += g[i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic

inline Var add(Var a, Var b) {
  detail::check_same_size(a, b, "add");
  Tensor out = a.value();
  const Tensor& B = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    if (double* ga = t.grad_if(ia)) detail::axpy(1.0, g.data(), ga, g.size());
    if (double* gb = t.grad_if(ib)) detail::axpy(1.0, g.data(), gb, g.size());
  });
}

inline Var sub(Var a, Var b) {
  detail::check_same_size(a, b, "sub");
  Tensor out = a.value();
  const Tensor& B = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    if (double* ga = t.grad_if(ia)) detail::axpy(1.0, g.data(), ga, g.size());
    if (double* gb = t.grad_if(ib)) detail::axpy(-1.0, g.data(), gb, g.size());
  });
}

// Elementwise product.
inline Var mul(Var a, Var b) {
  detail::check_same_size(a, b, "mul");
  Tensor out = a.value();
  const Tensor& B = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    const Tensor& A = t.value(ia);
    const Tensor& B = t.value(ib);
    if (double* ga = t.grad_if(ia))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
    if (double* gb = t.grad_if(ib))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
  });
}

inline Var scale(Var a, double c) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= c;
  const auto ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia, c](Tape& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    if (double* ga = t.grad_if(ia)) detail::axpy(c, g.data(), ga, g.size());
  });
}

inline Var add_scalar(Var a, double c) {
  Tensor out = a.value();
  for (double& v : out.values()) v += c;
  const auto ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia](Tape& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    if (double* ga = t.grad_if(ia)) detail::axpy(1.0, g.data(), ga, g.size());
  });
}

// 1 - a
inline Var one_minus(Var a) { return add_scalar(scale(a, -1.0), 1.0); }

// Vector a times scalar node s.
inline Var scale_by(Var a, Var s) {
  if (s.size() != 1) throw std::invalid_argument("scale_by: scalar expected");
  const double sv = s.scalar();
  Tensor out = a.value();
  for (double& v : out.values()) v *= sv;
  const auto ia = a.id(), is = s.id();
  return a.tape()->record(std::move(out), {a, s}, [ia, is](Tape& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    const double sv = t.value(is)[0];
    if (double* ga = t.grad_if(ia)) detail::axpy(sv, g.data(), ga, g.size());
    if (double* gs = t.grad_if(is)) gs[0] += detail::dot(g.data(), t.value(ia).data(), g.size());
  });
}

// 1 / a
inline Var reciprocal(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = 1.0 / v;
  return detail::unary(a, std::move(out), [](double, double y, double g) { return -g * y * y; });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

inline Var sigmoid(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = detail::stable_sigmoid(v);
  return detail::unary(a, std::move(out),
                       [](double, double y, double g) { return g * y * (1.0 - y); });
}

inline Var tanh(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::tanh(v);
  return detail::unary(a, std::move(out),
                       [](double, double y, double g) { return g * (1.0 - y * y); });
}

inline Var log(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::log(v);
  return detail::unary(a, std::move(out), [](double x, double, double g) { return g / x; });
}

inline Var exp(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::exp(v);
  return detail::unary(a, std::move(out), [](double, double y, double g) { return g * y; });
}

// log(sigmoid(a)) = -softplus(-a).
inline Var log_sigmoid(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = -detail::softplus(-v);
  return detail::unary(a, std::move(out), [](double x, double, double g) {
    return g * (1.0 - detail::stable_sigmoid(x));
  });
}

// log(1 - exp(a)) for a < 0.
inline Var log1m_exp(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) {
    if (!(v < 0.0)) throw std::domain_error("log1m_exp: argument must be negative");
    v = v > -M_LN2 ? std::log(-std::expm1(v)) : std::log1p(-std::exp(v));
  }
  return detail::unary(a, std::move(out), [](double x, double, double g) {
    // d/dx log(1 - e^x) = -e^x / (1 - e^x) = -1 / expm1(-x)
    return -g / std::expm1(-x);
  });
}

// |a| with subgradient 0 at the kink.
inline Var abs(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::fabs(v);
  return detail::unary(a, std::move(out), [](double x, double, double g) {
    return x > 0 ? g : (x < 0 ? -g : 0.0);
  });
}

// Gradient is passed through inside [lo, hi] and blocked outside.
inline Var clamp(Var a, double lo, double hi) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::clamp(v, lo, hi);
  return detail::unary(a, std::move(out), [lo, hi](double x, double, double g) {
    return (x >= lo && x <= hi) ? g : 0.0;
  });
}

// Value copy cut off from differentiation.
inline Var detach(Var a) { return a.tape()->constant(a.value()); }

// ---------------------------------------------------------------------------
// Reductions

inline Var sum(Var a) {
  double s = 0;
  for (double v : a.value().values()) s += v;
  const auto ia = a.id();
  return a.tape()->record(Tensor::scalar(s), {a}, [ia](Tape& t, std::uint32_t self) {
    const double g = t.grad(self)[0];
    if (double* ga = t.grad_if(ia))
      for (std::size_t i = 0; i < t.value(ia).size(); ++i) ga[i] += g;
  });
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

inline Var dot(Var a, Var b) {
  detail::check_same_size(a, b, "dot");
  const double s = detail::dot(a.value().data(), b.value().data(), a.size());
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(Tensor::scalar(s), {a, b}, [ia, ib](Tape& t, std::uint32_t self) {
    const double g = t.grad(self)[0];
    const std::size_t n = t.value(ia).size();
    if (double* ga = t.grad_if(ia)) detail::axpy(g, t.value(ib).data(), ga, n);
    if (double* gb = t.grad_if(ib)) detail::axpy(g, t.value(ia).data(), gb, n);
  });
}

// Largest element; the gradient goes to the first maximiser.
inline Var max_element(Var a) {
  const auto& v = a.value();
  if (v.size() == 0) throw std::invalid_argument("max_element of empty tensor");
  std::size_t arg = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[arg]) arg = i;
  const auto ia = a.id();
  return a.tape()->record(Tensor::scalar(v[arg]), {a}, [ia, arg](Tape& t, std::uint32_t self) {
    if (double* ga = t.grad_if(ia)) ga[arg] += t.grad(self)[0];
  });
}

inline Var element(Var a, std::size_t i) {
  if (i >= a.size()) throw std::out_of_range("element index");
  const auto ia = a.id();
  return a.tape()->record(Tensor::scalar(a.value()[i]), {a}, [ia, i](Tape& t, std::uint32_t self) {
    if (double* ga = t.grad_if(ia)) ga[i] += t.grad(self)[0];
  });
}

// ---------------------------------------------------------------------------
// Structure

inline Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat of nothing");
  std::size_t n = 0;
  for (const Var& p : parts) n += p.size();
  Tensor out(Shape{n});
  std::size_t off = 0;
  for (const Var& p : parts) {
    const auto& v = p.value();
    std::copy(v.data(), v.data() + v.size(), out.data() + off);
    off += v.size();
  }
  std::vector<std::uint32_t> ids;
  ids.reserve(parts.size());
  for (const Var& p : parts) ids.push_back(p.id());
  return parts[0].tape()->record(std::move(out), parts, [ids](Tape& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    std::size_t off = 0;
    for (auto id : ids) {
      const std::size_t n = t.value(id).size();
      if (double* gi = t.grad_if(id)) detail::axpy(1.0, g.data() + off, gi, n);
      off += n;
    }
  });
}

inline Var slice(Var a, std::size_t offset, std::size_t length) {
  if (offset + length > a.size()) throw std::out_of_range("slice");
  const auto& v = a.value();
  Tensor out(Shape{length},
             std::vector<double>(v.data() + offset, v.data() + offset + length));
  const auto ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia, offset, length](Tape& t, std::uint32_t self) {
    if (double* ga = t.grad_if(ia)) detail::axpy(1.0, t.grad(self).data(), ga + offset, length);
  });
}

// Stacks equal-length vectors as the rows of a matrix.
inline Var stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows of nothing");
  const std::size_t d = rows[0].size();
  Tensor out(Shape{rows.size(), d});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != d) throw std::invalid_argument("stack_rows: ragged rows");
    std::copy(rows[r].value().data(), rows[r].value().data() + d, out.data() + r * d);
  }
  std::vector<std::uint32_t> ids;
  for (const Var& p : rows) ids.push_back(p.id());
  return rows[0].tape()->record(std::move(out), rows, [ids, d](Tape& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    for (std::size_t r = 0; r < ids.size(); ++r)
      if (double* gi = t.grad_if(ids[r])) detail::axpy(1.0, g.data() + r * d, gi, d);
  });
}

// Row `row` of an embedding table of shape [vocab, dim].
inline Var embedding(Var table, std::size_t row) {
  const Tensor& T = table.value();
  if (T.rank() != 2 || row >= T.rows()) throw std::out_of_range("embedding row");
  const std::size_t d = T.cols();
  Tensor out(Shape{d}, std::vector<double>(T.data() + row * d, T.data() + (row + 1) * d));
  const auto it = table.id();
  return table.tape()->record(std::move(out), {table}, [it, row, d](Tape& t, std::uint32_t self) {
    if (double* gt = t.grad_if(it)) detail::axpy(1.0, t.grad(self).data(), gt + row * d, d);
  });
}

// (1 / normalizer) * sum_i weights[i] * H[i, :] for H of shape [n, d].
inline Var mean_pool(Var h, Var weights, double normalizer) {
  const Tensor& H = h.value();
  const Tensor& W = weights.value();
  if (H.rank() != 2 || H.rows() != W.size())
    throw std::invalid_argument("mean_pool: shape mismatch");
  bool any = false;
  for (double w : W.values()) any = any || w > 0.0;
  if (!any) throw AllMaskedError("mean_pool");
  const std::size_t n = H.rows(), d = H.cols();
  const double inv = 1.0 / normalizer;
  Tensor out(Shape{d});
  for (std::size_t i = 0; i < n; ++i)
    if (W[i] != 0.0) detail::axpy(W[i] * inv, H.data() + i * d, out.data(), d);
  const auto ih = h.id(), iw = weights.id();
  return h.tape()->record(std::move(out), {h, weights}, [ih, iw, n, d, inv](Tape& t, std::uint32_t self) {
    const double* g = t.grad(self).data();
    const Tensor& H = t.value(ih);
    const Tensor& W = t.value(iw);
    if (double* gh = t.grad_if(ih))
      for (std::size_t i = 0; i < n; ++i)
        if (W[i] != 0.0) detail::axpy(W[i] * inv, g, gh + i * d, d);
    if (double* gw = t.grad_if(iw))
      for (std::size_t i = 0; i < n; ++i) gw[i] += inv * detail::dot(H.data() + i * d, g, d);
  });
}

// out_i = w_i e^{s_i} / sum_j w_j e^{s_j}. Binary w gives a hard mask; real
// w in [0, 1] gives the soft mask. Entries with w_i = 0 are exactly zero.
inline Var masked_softmax(Var scores, Var weights) {
  detail::check_same_size(scores, weights, "masked_softmax");
  const Tensor& S = scores.value();
  const Tensor& W = weights.value();
  const std::size_t n = S.size();
  if (n == 0) throw std::invalid_argument("masked_softmax of empty tensor");
  double m = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < n; ++i)
    if (W[i] > 0.0) {
      any = true;
      if (!std::isfinite(S[i])) throw NonFiniteLoss("masked_softmax: non-finite score");
      m = std::max(m, S[i]);
    }
  if (!any) throw AllMaskedError("masked_softmax");
  std::vector<double> e(n, 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (W[i] > 0.0) {
      e[i] = std::exp(S[i] - m);
      z += W[i] * e[i];
    }
  Tensor out(Shape{n});
  for (std::size_t i = 0; i < n; ++i) out[i] = W[i] > 0.0 ? W[i] * e[i] / z : 0.0;
  const auto is = scores.id(), iw = weights.id();
  return scores.tape()->record(std::move(out), {scores, weights},
      [is, iw, n, e = std::move(e), z](Tape& t, std::uint32_t self) {
        const auto& g = t.grad(self);
        const Tensor& y = t.value(self);
        double gy = 0.0;
        for (std::size_t i = 0; i < n; ++i) gy += g[i] * y[i];
        if (double* gs = t.grad_if(is))
          for (std::size_t i = 0; i < n; ++i) gs[i] += y[i] * (g[i] - gy);
        if (double* gw = t.grad_if(iw))
          for (std::size_t i = 0; i < n; ++i) gw[i] += e[i] / z * (g[i] - gy);
      });
}

inline Var softmax(Var scores) {
  return masked_softmax(scores, scores.tape()->constant(Tensor(Shape{scores.size()}, 1.0)));
}

// -log softmax(logits)[target], log-sum-exp stabilised.
inline Var cross_entropy(Var logits, std::size_t target) {
  const Tensor& L = logits.value();
  if (target >= L.size()) throw std::out_of_range("cross_entropy target");
  double m = L[0];
  for (double v : L.values()) m = std::max(m, v);
  double z = 0.0;
  for (double v : L.values()) z += std::exp(v - m);
  const double lse = m + std::log(z);
  const auto il = logits.id();
  return logits.tape()->record(Tensor::scalar(lse - L[target]), {logits},
      [il, target, lse](Tape& t, std::uint32_t self) {
        double* gl = t.grad_if(il);
        if (!gl) return;
        const double g = t.grad(self)[0];
        const Tensor& L = t.value(il);
        for (std::size_t i = 0; i < L.size(); ++i) gl[i] += g * std::exp(L[i] - lse);
        gl[target] -= g;
      });
}

// Inverted dropout: surviving units are scaled by 1 / (1 - rate).
inline Var dropout(Var a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
  const double keep = 1.0 / (1.0 - rate);
  std::vector<double> mask(a.size());
  for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep;
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  const auto ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia, mask = std::move(mask)](Tape& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    if (double* ga = t.grad_if(ia))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
  });
}

// ---------------------------------------------------------------------------
// Value-level helpers (no tape)

inline std::vector<double> log_softmax_values(std::span<const double> logits) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : logits) m = std::max(m, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - m);
  const double lse = m + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

inline double log_sum_exp(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : xs) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double z = 0.0;
  for (double v : xs) z += std::exp(v - m);
  return m + std::log(z);
}

}  // namespace selectgen
