// Copyright 2026 The Fusion4CA Authors
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

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fusion4ca/core/tensor.hpp"

namespace fusion4ca {

struct ParamRef {
  std::uint32_t index = std::numeric_limits<std::uint32_t>::max();
  bool valid() const { return index != std::numeric_limits<std::uint32_t>::max(); }
  friend bool operator==(const ParamRef&, const ParamRef&) = default;
};

/// One learnable leaf. `inference` marks leaves that are part of the deployed
/// model; training-only modules (alignment, auxiliary branch) set it false.
template <class T>
struct Param {
  std::string name;
  std::string group;
  Tensor<T> value;
  bool trainable = true;
  bool inference = true;
};

/// Ordered parameter tree. Insertion order is the documented checkpoint order.
template <class T>
class ParamStore {
 public:
  ParamRef add(std::string name, std::string group, Tensor<T> value, bool inference) {
    if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    ParamRef ref{static_cast<std::uint32_t>(params_.size())};
    index_.emplace(name, ref.index);
    params_.push_back(Param<T>{std::move(name), std::move(group), std::move(value), true, inference});
    return ref;
  }

  Param<T>& operator[](ParamRef r) { return params_.at(r.index); }
  const Param<T>& operator[](ParamRef r) const { return params_.at(r.index); }
  Param<T>& at(std::size_t i) { return params_.at(i); }
  const Param<T>& at(std::size_t i) const { return params_.at(i); }

  std::size_t size() const { return params_.size(); }
  std::span<Param<T>> all() { return params_; }
  std::span<const Param<T>> all() const { return params_; }

  std::optional<ParamRef> find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return ParamRef{it->second};
  }

  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& p : params_) {
      ParamRef r = out.add(p.name, p.group, p.value.template cast<U>(), p.inference);
      out[r].trainable = p.trainable;
    }
    return out;
  }

 private:
  std::vector<Param<T>> params_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape. Values are computed eagerly; each op records a closure
/// that scatters its output gradient into its inputs.
template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>&)>;

  explicit Tape(const ParamStore<T>* params = nullptr, bool grad_enabled = true)
      : params_(params), grad_enabled_(grad_enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  const ParamStore<T>* params() const { return params_; }

  Var constant(Tensor<T> v) { return push(std::move(v), false, {}); }

  /// Leaf that receives a gradient (used by gradient checks on inputs).
  Var input(Tensor<T> v) { return push(std::move(v), grad_enabled_, {}); }

  Var param(ParamRef r) {
    if (params_ == nullptr) throw std::logic_error("tape has no parameter store");
    if (auto it = param_vars_.find(r.index); it != param_vars_.end()) return Var{it->second};
    const Param<T>& p = (*params_)[r];
    Var v = push(p.value, grad_enabled_ && p.trainable, {});
    param_vars_.emplace(r.index, v.id);
    touched_.push_back(r);
    return v;
  }

  Var record(Tensor<T> value, std::initializer_list<Var> inputs, BackwardFn fn) {
    bool needs = false;
    for (Var in : inputs) needs = needs || requires_grad(in);
    return push(std::move(value), needs, needs ? std::move(fn) : BackwardFn{});
  }

  Var record(Tensor<T> value, std::span<const Var> inputs, BackwardFn fn) {
    bool needs = false;
    for (Var in : inputs) needs = needs || requires_grad(in);
    return push(std::move(value), needs, needs ? std::move(fn) : BackwardFn{});
  }

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  const Shape& shape(Var v) const { return nodes_.at(v.id).value.shape(); }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  Tensor<T>& grad(Var v) {
    Node& n = nodes_.at(v.id);
    if (n.grad.size() != n.value.size()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }
  bool has_grad(Var v) const { return nodes_.at(v.id).grad.size() == nodes_.at(v.id).value.size(); }

  void backward(Var root) {
    if (value(root).size() != 1) throw ShapeError("backward() requires a scalar root");
    if (!requires_grad(root)) return;
    grad(root)[0] = T(1);
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.requires_grad || !n.backward || n.grad.size() != n.value.size()) continue;
      n.backward(*this, n.grad);
    }
  }

  /// Gradient accumulated into a parameter; zeros if the parameter was never
  /// read, is frozen, or backward() has not run.
  Tensor<T> param_grad(ParamRef r) const {
    if (auto it = param_vars_.find(r.index); it != param_vars_.end()) {
      const Node& n = nodes_[it->second];
      if (n.grad.size() == n.value.size()) return n.grad;
    }
    return Tensor<T>((*params_)[r].value.shape());
  }

  std::optional<Var> param_var(ParamRef r) const {
    if (auto it = param_vars_.find(r.index); it != param_vars_.end()) return Var{it->second};
    return std::nullopt;
  }

  /// Parameters read by the forward pass, in first-access order.
  const std::vector<ParamRef>& touched() const { return touched_; }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Tensor<T> value, bool requires_grad, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), Tensor<T>(), requires_grad, std::move(fn)});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  const ParamStore<T>* params_;
  bool grad_enabled_;
  std::deque<Node> nodes_;
  std::unordered_map<std::uint32_t, int> param_vars_;
  std::vector<ParamRef> touched_;
};

}  // namespace fusion4ca
