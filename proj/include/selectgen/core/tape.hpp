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

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "selectgen/core/errors.hpp"
#include "selectgen/core/tensor.hpp"

namespace selectgen {

using ParamId = std::uint32_t;

// Trainable weights belong to exactly one partition: the generator (theta),
// the prior selector network (gamma) or the posterior selector (phi).
enum class Partition : std::uint8_t {
  kGenerator = 0,
  kPriorSelector = 1,
  kPosteriorSelector = 2,
};

inline const char* partition_name(Partition p) {
  switch (p) {
    case Partition::kGenerator:
      return "generator";
    case Partition::kPriorSelector:
      return "prior_selector";
    case Partition::kPosteriorSelector:
      return "posterior_selector";
  }
  return "?";
}

// Named parameter tensors. Insertion order is the canonical order used by
// checkpoints, optimisers and gradient maps.
class ParamStore {
 public:
  ParamId add(std::string name, Shape shape, Partition partition) {
    if (index_.count(name)) throw Error("duplicate parameter '" + name + "'");
    const auto id = static_cast<ParamId>(values_.size());
    index_.emplace(name, id);
    names_.push_back(std::move(name));
    values_.emplace_back(std::move(shape));
    partitions_.push_back(partition);
    return id;
  }

  std::size_t size() const noexcept { return values_.size(); }
  const std::string& name(ParamId id) const { return names_.at(id); }
  Partition partition(ParamId id) const { return partitions_.at(id); }
  Tensor& value(ParamId id) { return values_.at(id); }
  const Tensor& value(ParamId id) const { return values_.at(id); }

  std::optional<ParamId> find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  ParamId id(std::string_view name) const {
    auto found = find(name);
    if (!found) throw Error("unknown parameter '" + std::string(name) + "'");
    return *found;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : values_) n += t.size();
    return n;
  }
  std::size_t parameter_count(Partition p) const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (partitions_[i] == p) n += values_[i].size();
    return n;
  }
  // Name of the first parameter holding a NaN or infinity.
  std::optional<std::string> first_non_finite() const {
    for (std::size_t i = 0; i < values_.size(); ++i)
      for (double v : values_[i].values())
        if (!std::isfinite(v)) return names_[i];
    return std::nullopt;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::vector<Partition> partitions_;
  std::unordered_map<std::string, ParamId> index_;
};

// Gradients keyed by parameter. Only parameters reachable from the loss
// appear as keys.
class GradientMap {
 public:
  GradientMap() = default;
  explicit GradientMap(const ParamStore* params) : params_(params) {}

  bool contains(ParamId id) const { return grads_.count(id) != 0; }
  bool contains(std::string_view name) const {
    auto id = params_ ? params_->find(name) : std::nullopt;
    return id && contains(*id);
  }
  const Tensor& at(ParamId id) const { return grads_.at(id); }
  const Tensor& at(std::string_view name) const {
    return grads_.at(params_->id(name));
  }
  Tensor& at(ParamId id) { return grads_.at(id); }

  std::size_t size() const noexcept { return grads_.size(); }
  bool empty() const noexcept { return grads_.empty(); }
  const std::map<ParamId, Tensor>& entries() const noexcept { return grads_; }
  std::map<ParamId, Tensor>& entries() noexcept { return grads_; }
  const ParamStore* params() const noexcept { return params_; }

  void set(ParamId id, Tensor grad) { grads_[id] = std::move(grad); }

  // this += scale * other
  void accumulate(const GradientMap& other, double scale = 1.0) {
    if (!params_) params_ = other.params_;
    for (const auto& [id, g] : other.grads_) {
      auto it = grads_.find(id);
      if (it == grads_.end()) {
        Tensor scaled = g;
        for (double& v : scaled.values()) v *= scale;
        grads_.emplace(id, std::move(scaled));
      } else {
        auto dst = it->second.values();
        auto src = g.values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
      }
    }
  }

  void scale(double s) {
    for (auto& [id, g] : grads_)
      for (double& v : g.values()) v *= s;
  }

  // Drops every entry whose parameter is not in `keep`.
  void restrict_to(std::initializer_list<Partition> keep) {
    for (auto it = grads_.begin(); it != grads_.end();) {
      bool ok = false;
      for (Partition p : keep) ok = ok || params_->partition(it->first) == p;
      it = ok ? std::next(it) : grads_.erase(it);
    }
  }

 private:
  const ParamStore* params_ = nullptr;
  std::map<ParamId, Tensor> grads_;
};

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape() const noexcept { return tape_; }
  std::uint32_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  inline const Tensor& value() const;
  inline double scalar() const;
  inline std::size_t size() const;
  double operator[](std::size_t i) const { return value()[i]; }

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

// Records primitive operations in creation order, which is a topological
// order; backward() walks it once in reverse.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::uint32_t)>;

  explicit Tape(const ParamStore* params = nullptr, bool grad_enabled = true)
      : params_(params), grad_enabled_(grad_enabled) {
    if (params_) param_nodes_.assign(params_->size(), kNone);
  }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }
  const ParamStore* params() const noexcept { return params_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var constant(Tensor value) { return push(std::move(value), false); }
  Var constant(std::vector<double> v) { return constant(Tensor::vector(std::move(v))); }
  Var scalar(double v) { return constant(Tensor::scalar(v)); }

  // One leaf per parameter per tape, so repeated use accumulates into a
  // single gradient slot.
  Var param(ParamId id) {
    if (!params_) throw Error("tape has no parameter store");
    std::uint32_t& slot = param_nodes_.at(id);
    if (slot == kNone) {
      slot = static_cast<std::uint32_t>(nodes_.size());
      Node node;
      node.value = params_->value(id);
      node.requires_grad = grad_enabled_;
      node.param = static_cast<std::int32_t>(id);
      nodes_.push_back(std::move(node));
    }
    return Var(this, slot);
  }
  Var param(std::string_view name) { return param(params_->id(name)); }

  // Appends an operation output. `fn` is stored only when some input needs a
  // gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    bool needs = false;
    if (grad_enabled_)
      for (const Var& v : inputs) needs = needs || nodes_[v.id()].requires_grad;
    Var out = push(std::move(value), needs);
    if (needs) {
      Node& node = nodes_.back();
      node.inputs.reserve(inputs.size());
      for (const Var& v : inputs) node.inputs.push_back(v.id());
      node.backward = std::move(fn);
    }
    return out;
  }
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
    bool needs = false;
    if (grad_enabled_)
      for (const Var& v : inputs) needs = needs || nodes_[v.id()].requires_grad;
    Var out = push(std::move(value), needs);
    if (needs) {
      Node& node = nodes_.back();
      node.inputs.reserve(inputs.size());
      for (const Var& v : inputs) node.inputs.push_back(v.id());
      node.backward = std::move(fn);
    }
    return out;
  }

  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(const Var& v) const { return requires_grad(v.id()); }

  // Gradient slot of a node, allocated on first use.
  std::vector<double>& grad(std::uint32_t id) {
    auto& g = nodes_[id].grad;
    if (g.empty()) g.assign(nodes_[id].value.size(), 0.0);
    return g;
  }
  // Null when the node does not take part in differentiation.
  double* grad_if(std::uint32_t id) {
    return nodes_[id].requires_grad ? grad(id).data() : nullptr;
  }

  // Reverse sweep from a scalar loss. Visits each reachable node exactly once
  // and returns gradients for every reachable parameter.
  GradientMap backward(Var loss) {
    if (loss.value().size() != 1) throw NonScalarLoss(loss.value().size());
    GradientMap out(params_);
    const std::uint32_t root = loss.id();
    if (!nodes_[root].requires_grad) return out;
    for (auto& node : nodes_) node.grad.clear();
    std::vector<char> reached(root + 1, 0);
    reached[root] = 1;
    grad(root)[0] = 1.0;
    for (std::int64_t i = root; i >= 0; --i) {
      const auto id = static_cast<std::uint32_t>(i);
      Node& node = nodes_[id];
      if (!reached[id] || !node.requires_grad) continue;
      if (node.param >= 0) {
        const auto pid = static_cast<ParamId>(node.param);
        Tensor g(node.value.shape());
        if (!node.grad.empty()) g.storage() = node.grad;
        if (!g.all_finite()) throw NonFiniteGradient(params_->name(pid));
        out.set(pid, std::move(g));
        continue;
      }
      if (node.backward) {
        grad(id);
        node.backward(*this, id);
      }
      for (std::uint32_t in : nodes_[id].inputs)
        if (nodes_[in].requires_grad) reached[in] = 1;
    }
    return out;
  }

 private:
  static constexpr std::uint32_t kNone = 0xffffffffu;

  struct Node {
    Tensor value;
    std::vector<double> grad;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
    std::int32_t param = -1;
    bool requires_grad = false;
  };

  Var push(Tensor value, bool requires_grad) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  const ParamStore* params_;
  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> param_nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline double Var::scalar() const { return tape_->value(id_).item(); }
inline std::size_t Var::size() const { return tape_->value(id_).size(); }

}  // namespace selectgen
