// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "stpose/tensor.hpp"

namespace stpose {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(id); }
  const Shape& shape() const { return tape->value(id).shape(); }
};

template <typename T>
using GradMap = std::map<std::string, Tensor<T>>;

/// Define-by-run record of primitive ops. Each recorded node keeps its forward
/// value and, when any input requires a gradient, a closure that pushes the
/// node's adjoint into its inputs. Nodes are appended in execution order, so
/// replaying closures from the back of the list is a valid reverse sweep.
///
/// A tape is single-threaded. Independent tapes may share read-only inputs.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  /// Named leaf. Names must be unique on a tape.
  Var<T> leaf(std::string name, Tensor<T> value, bool requires_grad = true);
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn);
  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn fn);

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Adjoint buffer of node `id`, zero-filled on first access. Only valid
  /// during or after backward().
  Tensor<T>& grad_buffer(std::size_t id);
  /// Adds `g` (same element count) into the adjoint of `id`, adopting it when
  /// the buffer has not been touched yet.
  void accumulate_grad(std::size_t id, Tensor<T>&& g);
  void accumulate_grad(std::size_t id, const Tensor<T>& g);
  const Tensor<T>& grad(std::size_t id) const { return nodes_.at(id).grad; }

  /// Reverse sweep from a scalar loss. Returns the gradient of every named
  /// requires-grad leaf (zeros for leaves the loss does not depend on).
  GradMap<T> backward(Var<T> loss);
  /// Reverse sweep seeded with an explicit adjoint for `output`.
  GradMap<T> backward(Var<T> output, const Tensor<T>& seed);

  /// Node ids whose closures ran during the last backward(), in call order.
  const std::vector<std::size_t>& last_backward_order() const { return order_; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    BackwardFn backward;
    std::string name;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> names_;
  std::vector<std::size_t> order_;
};

namespace ad {

inline constexpr std::size_t kZeroRow = std::numeric_limits<std::size_t>::max();

template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> a, T s);
/// x[..., C] + b[C]; the only broadcast the library performs.
template <typename T> Var<T> add_bias(Var<T> x, Var<T> b);
/// a[m, k] * b[k, n].
template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
/// a[B, m, k] * b[B, k, n], or a * b^T per batch when transpose_b (b[B, n, k]).
template <typename T> Var<T> batch_matmul(Var<T> a, Var<T> b, bool transpose_b = false);
/// Softmax over the last axis, max-shifted.
template <typename T> Var<T> softmax(Var<T> x);
template <typename T> Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5));
/// tanh approximation of x * Phi(x).
template <typename T> Var<T> gelu(Var<T> x);
template <typename T> Var<T> sigmoid(Var<T> x);
/// Natural log; throws ContractError on non-positive entries.
template <typename T> Var<T> log(Var<T> x);
template <typename T> Var<T> reshape(Var<T> x, Shape shape);
template <typename T> Var<T> permute(Var<T> x, std::vector<std::size_t> axes);
template <typename T> Var<T> roll(Var<T> x, std::size_t axis, std::ptrdiff_t shift);
/// Treats x as [N, R] rows (leading axis). Index kZeroRow yields a zero row.
template <typename T> Var<T> gather_rows(Var<T> x, std::vector<std::size_t> rows);
/// Stacks equally-shaped values along a new leading axis.
template <typename T> Var<T> stack(const std::vector<Var<T>>& xs);
/// Mean over the leading axis: [N, ...] -> [...].
template <typename T> Var<T> mean_rows(Var<T> x);
template <typename T> Var<T> sum(Var<T> x);
template <typename T> Var<T> mean(Var<T> x);

}  // namespace ad

// Scalar forward kernels shared with test oracles.
template <typename T>
inline T fast_tanh(T u) {
  return T(1) - T(2) / (std::exp(T(2) * u) + T(1));
}

template <typename T>
inline T gelu_value(T x) {
  constexpr T k = T(0.7978845608028654);  // sqrt(2/pi)
  return T(0.5) * x * (T(1) + fast_tanh(k * (x + T(0.044715) * x * x * x)));
}

template <typename T>
inline T sigmoid_value(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace stpose
