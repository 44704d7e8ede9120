// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <string_view>

#include "stpose/autodiff.hpp"

namespace stpose {

/// Named, shaped parameter set. Iteration order is lexicographic by name,
/// which fixes the layout of checkpoints and the order of gradient reduction.
template <typename T>
class ParamStore {
 public:
  void add(const std::string& name, Tensor<T> value) {
    if (!entries_.emplace(name, std::move(value)).second) {
      throw ContractError("parameter '" + name + "' declared twice");
    }
  }

  bool contains(const std::string& name) const { return entries_.count(name) > 0; }

  const Tensor<T>& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
  }
  Tensor<T>& at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
  }

  const std::map<std::string, Tensor<T>>& entries() const { return entries_; }
  std::map<std::string, Tensor<T>>& entries() { return entries_; }
  std::size_t count() const { return entries_.size(); }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& [_, t] : entries_) n += t.size();
    return n;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& [k, v] : entries_) out.add(k, v.template cast<U>());
    return out;
  }

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::map<std::string, Tensor<T>> entries_;
};

/// Binds store entries to a tape as named leaves on first use.
template <typename T>
class ParamBinder {
 public:
  ParamBinder(Tape<T>& tape, const ParamStore<T>& store, bool requires_grad = true)
      : tape_(tape), store_(store), requires_grad_(requires_grad) {}

  Var<T> get(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    Var<T> v = tape_.leaf(name, store_.at(name), requires_grad_);
    bound_.emplace(name, v);
    return v;
  }

  Tape<T>& tape() { return tape_; }

 private:
  Tape<T>& tape_;
  const ParamStore<T>& store_;
  bool requires_grad_;
  std::map<std::string, Var<T>> bound_;
};

/// Dotted-prefix view over a binder: scope("w") resolves "<prefix>w".
template <typename T>
class Scope {
 public:
  explicit Scope(ParamBinder<T>& binder, std::string prefix = {})
      : binder_(&binder), prefix_(std::move(prefix)) {}

  Var<T> operator()(std::string_view name) const {
    return binder_->get(prefix_ + std::string(name));
  }
  Scope operator/(std::string_view child) const {
    return Scope(*binder_, prefix_ + std::string(child) + ".");
  }
  Tape<T>& tape() const { return binder_->tape(); }
  const std::string& prefix() const { return prefix_; }

 private:
  ParamBinder<T>* binder_;
  std::string prefix_;
};

/// Declares parameters with their initial values. Values are drawn in double
/// precision from one seeded engine, so f32 and f64 runs start from the same
/// point and declaration order fixes every draw.
class ParamInit {
 public:
  explicit ParamInit(std::uint64_t seed)
      : state_(std::make_shared<State>(State{ParamStore<double>{}, std::mt19937_64(seed)})) {}

  ParamInit operator/(std::string_view child) const {
    ParamInit out(*this);
    out.prefix_ += std::string(child) + ".";
    return out;
  }

  void normal(std::string_view name, Shape shape, double stddev);
  void zeros(std::string_view name, Shape shape);
  void ones(std::string_view name, Shape shape);

  const ParamStore<double>& store() const { return state_->store; }
  std::string full_name(std::string_view name) const { return prefix_ + std::string(name); }

 private:
  struct State {
    ParamStore<double> store;
    std::mt19937_64 rng;
  };
  std::shared_ptr<State> state_;
  std::string prefix_;
};

}  // namespace stpose
