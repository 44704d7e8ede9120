// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "stpose/autodiff.hpp"

#include <Eigen/Core>

#include <cmath>

namespace stpose {

// ---------------------------------------------------------------------------
// Tape

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, false});
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::leaf(std::string name, Tensor<T> value, bool requires_grad) {
  if (names_.count(name)) throw ContractError("tape leaf '" + name + "' bound twice");
  names_.emplace(name, nodes_.size());
  nodes_.push_back(Node{std::move(value), {}, {}, std::move(name), requires_grad});
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::initializer_list<Var<T>> inputs,
                       BackwardFn fn) {
  return record(std::move(value), std::vector<Var<T>>(inputs), std::move(fn));
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, const std::vector<Var<T>>& inputs,
                       BackwardFn fn) {
  bool needs = false;
  for (const auto& v : inputs) {
    if (v.tape != this) throw ContractError("op mixes values from different tapes");
    needs = needs || nodes_[v.id].requires_grad;
  }
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(std::size_t id) {
  Node& n = nodes_.at(id);
  if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
  return n.grad;
}

template <typename T>
void Tape<T>::accumulate_grad(std::size_t id, Tensor<T>&& g) {
  Node& n = nodes_.at(id);
  if (g.size() != n.value.size()) throw DimensionError("accumulate_grad: size mismatch");
  if (n.grad.empty()) {
    n.grad = g.shape() == n.value.shape() ? std::move(g) : std::move(g).reshaped(n.value.shape());
    return;
  }
  auto d = n.grad.data();
  auto s = g.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

template <typename T>
void Tape<T>::accumulate_grad(std::size_t id, const Tensor<T>& g) {
  Node& n = nodes_.at(id);
  if (g.size() != n.value.size()) throw DimensionError("accumulate_grad: size mismatch");
  if (n.grad.empty()) {
    n.grad = Tensor<T>(n.value.shape(), g.storage());
    return;
  }
  auto d = n.grad.data();
  auto s = g.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

template <typename T>
GradMap<T> Tape<T>::backward(Var<T> loss) {
  if (loss.tape != this) throw ContractError("backward: loss recorded on another tape");
  if (value(loss.id).size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_string(value(loss.id).shape()));
  }
  return backward(loss, Tensor<T>(value(loss.id).shape(), T(1)));
}

template <typename T>
GradMap<T> Tape<T>::backward(Var<T> output, const Tensor<T>& seed) {
  if (output.tape != this) throw ContractError("backward: output recorded on another tape");
  if (seed.shape() != value(output.id).shape()) {
    throw DimensionError("backward: seed " + shape_string(seed.shape()) + " vs output " +
                         shape_string(value(output.id).shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor<T>();
  order_.clear();
  nodes_[output.id].grad = seed;
  for (std::size_t i = output.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, n.grad);
    order_.push_back(i);
    if (n.name.empty()) n.grad = Tensor<T>();  // intermediates are no longer needed
  }
  GradMap<T> out;
  for (const auto& [name, id] : names_) {
    const Node& n = nodes_[id];
    if (!n.requires_grad) continue;
    out.emplace(name, n.grad.empty() ? Tensor<T>(n.value.shape()) : n.grad);
  }
  return out;
}

template class Tape<float>;
template class Tape<double>;

// ---------------------------------------------------------------------------
// Primitive ops

namespace ad {
namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using CMap = Eigen::Map<const MatR<T>>;
template <typename T>
using MMap = Eigen::Map<MatR<T>>;

template <typename T>
Tape<T>& tape_of(Var<T> a) {
  if (a.tape == nullptr) throw ContractError("op on an unbound Var");
  return *a.tape;
}

template <typename T>
void require_same_shape(const char* op, Var<T> a, Var<T> b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src, T factor = T(1)) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * s[i];
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape("add", a, b);
  Tensor<T> out = a.value();
  accumulate(out, b.value());
  const auto ia = a.id, ib = b.id;
  return tape_of(a).record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(ia)) t.accumulate_grad(ia, g);
    if (t.requires_grad(ib)) t.accumulate_grad(ib, g);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape("sub", a, b);
  Tensor<T> out = a.value();
  accumulate(out, b.value(), T(-1));
  const auto ia = a.id, ib = b.id;
  return tape_of(a).record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(ia)) t.accumulate_grad(ia, g);
    if (t.requires_grad(ib)) accumulate(t.grad_buffer(ib), g, T(-1));
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape("mul", a, b);
  Tensor<T> out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  const auto ia = a.id, ib = b.id;
  return tape_of(a).record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
    auto gv = g.data();
    if (t.requires_grad(ia)) {
      auto d = t.grad_buffer(ia).data();
      auto bv = t.value(ib).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      auto d = t.grad_buffer(ib).data();
      auto av = t.value(ia).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v *= s;
  const auto ia = a.id;
  return tape_of(a).record(std::move(out), {a}, [ia, s](Tape<T>& t, const Tensor<T>& g) {
    accumulate(t.grad_buffer(ia), g, s);
  });
}

template <typename T>
Var<T> add_bias(Var<T> x, Var<T> b) {
  const Shape xs = x.shape();
  if (b.value().rank() != 1 || xs.empty() || xs.back() != b.shape()[0]) {
    throw DimensionError("add_bias: x " + shape_string(xs) + " with bias " +
                         shape_string(b.shape()));
  }
  const std::size_t c = b.shape()[0];
  Tensor<T> out = x.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i % c];
  const auto ix = x.id, ib = b.id;
  return tape_of(x).record(std::move(out), {x, b}, [ix, ib, c](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(ix)) t.accumulate_grad(ix, g);
    if (t.requires_grad(ib)) {
      auto d = t.grad_buffer(ib).data();
      auto gv = g.data();
      for (std::size_t i = 0; i < gv.size(); ++i) d[i % c] += gv[i];
    }
  });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const Shape as = a.shape();
  const Shape bs = b.shape();
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0]) {
    throw DimensionError("matmul: cannot multiply " + shape_string(as) + " by " +
                         shape_string(bs));
  }
  const std::size_t m = as[0], k = as[1], n = bs[1];
  Tensor<T> out({m, n});
  MMap<T>(out.data().data(), m, n).noalias() =
      CMap<T>(a.value().data().data(), m, k) * CMap<T>(b.value().data().data(), k, n);
  const auto ia = a.id, ib = b.id;
  return tape_of(a).record(std::move(out), {a, b},
                           [ia, ib, m, k, n](Tape<T>& t, const Tensor<T>& g) {
    CMap<T> G(g.data().data(), m, n);
    if (t.requires_grad(ia)) {
      MMap<T>(t.grad_buffer(ia).data().data(), m, k).noalias() +=
          G * CMap<T>(t.value(ib).data().data(), k, n).transpose();
    }
    if (t.requires_grad(ib)) {
      MMap<T>(t.grad_buffer(ib).data().data(), k, n).noalias() +=
          CMap<T>(t.value(ia).data().data(), m, k).transpose() * G;
    }
  });
}

template <typename T>
Var<T> batch_matmul(Var<T> a, Var<T> b, bool transpose_b) {
  const Shape as = a.shape();
  const Shape bs = b.shape();
  const bool ok = as.size() == 3 && bs.size() == 3 && as[0] == bs[0] &&
                  (transpose_b ? as[2] == bs[2] : as[2] == bs[1]);
  if (!ok) {
    throw DimensionError(std::string("batch_matmul: cannot multiply ") + shape_string(as) +
                         (transpose_b ? " by transposed " : " by ") + shape_string(bs));
  }
  const std::size_t batch = as[0], m = as[1], k = as[2];
  const std::size_t n = transpose_b ? bs[1] : bs[2];
  Tensor<T> out({batch, m, n});
  const T* ap = a.value().data().data();
  const T* bp = b.value().data().data();
  T* op = out.data().data();
  for (std::size_t i = 0; i < batch; ++i) {
    CMap<T> A(ap + i * m * k, m, k);
    MMap<T> C(op + i * m * n, m, n);
    if (transpose_b) {
      C.noalias() = A * CMap<T>(bp + i * n * k, n, k).transpose();
    } else {
      C.noalias() = A * CMap<T>(bp + i * k * n, k, n);
    }
  }
  const auto ia = a.id, ib = b.id;
  return tape_of(a).record(
      std::move(out), {a, b},
      [ia, ib, batch, m, k, n, transpose_b](Tape<T>& t, const Tensor<T>& g) {
        const T* gp = g.data().data();
        const T* ap = t.value(ia).data().data();
        const T* bp = t.value(ib).data().data();
        T* da = t.requires_grad(ia) ? t.grad_buffer(ia).data().data() : nullptr;
        T* db = t.requires_grad(ib) ? t.grad_buffer(ib).data().data() : nullptr;
        for (std::size_t i = 0; i < batch; ++i) {
          CMap<T> G(gp + i * m * n, m, n);
          CMap<T> A(ap + i * m * k, m, k);
          if (transpose_b) {
            CMap<T> B(bp + i * n * k, n, k);
            if (da) MMap<T>(da + i * m * k, m, k).noalias() += G * B;
            if (db) MMap<T>(db + i * n * k, n, k).noalias() += G.transpose() * A;
          } else {
            CMap<T> B(bp + i * k * n, k, n);
            if (da) MMap<T>(da + i * m * k, m, k).noalias() += G * B.transpose();
            if (db) MMap<T>(db + i * k * n, k, n).noalias() += A.transpose() * G;
          }
        }
      });
}

template <typename T>
Var<T> softmax(Var<T> x) {
  if (x.value().rank() == 0) throw DimensionError("softmax: scalar input");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.value().size() / n;
  Tensor<T> out(x.shape());
  auto in = x.value().data();
  auto o = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = in.data() + r * n;
    T* dst = o.data() + r * n;
    T mx = src[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, src[j]);
    T total = 0;
    for (std::size_t j = 0; j < n; ++j) {
      dst[j] = std::exp(src[j] - mx);
      total += dst[j];
    }
    const T inv = T(1) / total;
    for (std::size_t j = 0; j < n; ++j) dst[j] *= inv;
  }
  const auto ix = x.id;
  const std::size_t out_id = tape_of(x).size();
  return tape_of(x).record(std::move(out), {x},
                           [ix, out_id, n, rows](Tape<T>& t, const Tensor<T>& g) {
    auto y = t.value(out_id).data();
    auto gv = g.data();
    auto d = t.grad_buffer(ix).data();
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t off = r * n;
      T dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += gv[off + j] * y[off + j];
      for (std::size_t j = 0; j < n; ++j) d[off + j] += y[off + j] * (gv[off + j] - dot);
    }
  });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps) {
  if (x.value().rank() == 0) throw DimensionError("layer_norm: scalar input");
  const std::size_t c = x.shape().back();
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw DimensionError("layer_norm: x " + shape_string(x.shape()) + " with gamma " +
                         shape_string(gamma.shape()) + ", beta " + shape_string(beta.shape()));
  }
  if (!(eps > T(0))) throw ContractError("layer_norm: eps must be positive");
  const std::size_t rows = x.value().size() / c;
  Tensor<T> out(x.shape());
  std::vector<T> xhat(x.value().size());
  std::vector<T> rstd(rows);
  auto in = x.value().data();
  auto gv = gamma.value().data();
  auto bv = beta.value().data();
  auto o = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = in.data() + r * c;
    T mean = 0;
    for (std::size_t j = 0; j < c; ++j) mean += src[j];
    mean /= T(c);
    T var = 0;
    for (std::size_t j = 0; j < c; ++j) var += (src[j] - mean) * (src[j] - mean);
    var /= T(c);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      const T h = (src[j] - mean) * rstd[r];
      xhat[r * c + j] = h;
      o[r * c + j] = gv[j] * h + bv[j];
    }
  }
  const auto ix = x.id, ig = gamma.id, ib = beta.id;
  return tape_of(x).record(
      std::move(out), {x, gamma, beta},
      [ix, ig, ib, c, rows, xhat = std::move(xhat), rstd = std::move(rstd)](
          Tape<T>& t, const Tensor<T>& g) {
        auto gv = g.data();
        if (t.requires_grad(ig) || t.requires_grad(ib)) {
          T* dg = t.requires_grad(ig) ? t.grad_buffer(ig).data().data() : nullptr;
          T* dbeta = t.requires_grad(ib) ? t.grad_buffer(ib).data().data() : nullptr;
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < c; ++j) {
              if (dg) dg[j] += gv[r * c + j] * xhat[r * c + j];
              if (dbeta) dbeta[j] += gv[r * c + j];
            }
          }
        }
        if (t.requires_grad(ix)) {
          auto gamma_v = t.value(ig).data();
          auto dx = t.grad_buffer(ix).data();
          for (std::size_t r = 0; r < rows; ++r) {
            T mean_d = 0, mean_dh = 0;
            for (std::size_t j = 0; j < c; ++j) {
              const T dh = gv[r * c + j] * gamma_v[j];
              mean_d += dh;
              mean_dh += dh * xhat[r * c + j];
            }
            mean_d /= T(c);
            mean_dh /= T(c);
            for (std::size_t j = 0; j < c; ++j) {
              const T dh = gv[r * c + j] * gamma_v[j];
              dx[r * c + j] += rstd[r] * (dh - mean_d - xhat[r * c + j] * mean_dh);
            }
          }
        }
      });
}

template <typename T>
Var<T> gelu(Var<T> x) {
  Tensor<T> out(x.shape());
  auto in = x.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = gelu_value(in[i]);
  const auto ix = x.id;
  return tape_of(x).record(std::move(out), {x}, [ix](Tape<T>& t, const Tensor<T>& g) {
    constexpr T k = T(0.7978845608028654);
    constexpr T a = T(0.044715);
    auto in = t.value(ix).data();
    auto gv = g.data();
    auto d = t.grad_buffer(ix).data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const T v = in[i];
      const T th = fast_tanh(k * (v + a * v * v * v));
      const T dv = T(0.5) * (T(1) + th) +
                   T(0.5) * v * (T(1) - th * th) * k * (T(1) + T(3) * a * v * v);
      d[i] += gv[i] * dv;
    }
  });
}

template <typename T>
Var<T> log(Var<T> x) {
  Tensor<T> out(x.shape());
  auto in = x.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    if (!(in[i] > T(0))) throw ContractError("log: non-positive input");
    o[i] = std::log(in[i]);
  }
  const auto ix = x.id;
  return tape_of(x).record(std::move(out), {x}, [ix](Tape<T>& t, const Tensor<T>& g) {
    auto in = t.value(ix).data();
    auto gv = g.data();
    auto d = t.grad_buffer(ix).data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv[i] / in[i];
  });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  Tensor<T> out(x.shape());
  auto in = x.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = sigmoid_value(in[i]);
  const auto ix = x.id;
  const std::size_t out_id = tape_of(x).size();
  return tape_of(x).record(std::move(out), {x}, [ix, out_id](Tape<T>& t, const Tensor<T>& g) {
    auto y = t.value(out_id).data();
    auto gv = g.data();
    auto d = t.grad_buffer(ix).data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv[i] * y[i] * (T(1) - y[i]);
  });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  const auto ix = x.id;
  return tape_of(x).record(std::move(out), {x}, [ix](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate_grad(ix, g);
  });
}

template <typename T>
Var<T> permute(Var<T> x, std::vector<std::size_t> axes) {
  Tensor<T> out = stpose::permute(x.value(), axes);
  const auto ix = x.id;
  return tape_of(x).record(std::move(out), {x},
                           [ix, inv = inverse_permutation(axes)](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate_grad(ix, stpose::permute(g, inv));
  });
}

template <typename T>
Var<T> roll(Var<T> x, std::size_t axis, std::ptrdiff_t shift) {
  Tensor<T> out = stpose::roll(x.value(), axis, shift);
  const auto ix = x.id;
  return tape_of(x).record(std::move(out), {x}, [ix, axis, shift](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate_grad(ix, stpose::roll(g, axis, -shift));
  });
}

template <typename T>
Var<T> gather_rows(Var<T> x, std::vector<std::size_t> rows) {
  const Shape xs = x.shape();
  if (xs.empty()) throw DimensionError("gather_rows: scalar input");
  if (rows.empty()) throw ContractError("gather_rows: empty row list");
  const std::size_t n = xs[0];
  const std::size_t width = x.value().size() / n;
  for (auto r : rows) {
    if (r != kZeroRow && r >= n) {
      throw DimensionError("gather_rows: row " + std::to_string(r) + " out of range for " +
                           shape_string(xs));
    }
  }
  Shape out_shape = xs;
  out_shape[0] = rows.size();
  Tensor<T> out(out_shape);
  auto in = x.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] == kZeroRow) continue;
    std::copy_n(in.begin() + rows[i] * width, width, o.begin() + i * width);
  }
  const auto ix = x.id;
  return tape_of(x).record(std::move(out), {x},
                           [ix, width, rows = std::move(rows)](Tape<T>& t, const Tensor<T>& g) {
    auto d = t.grad_buffer(ix).data();
    auto gv = g.data();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] == kZeroRow) continue;
      T* dst = d.data() + rows[i] * width;
      const T* src = gv.data() + i * width;
      for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
    }
  });
}

template <typename T>
Var<T> stack(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw ContractError("stack: no inputs");
  const Shape inner = xs[0].shape();
  for (const auto& v : xs) {
    if (v.shape() != inner) {
      throw DimensionError("stack: shapes " + shape_string(inner) + " and " +
                           shape_string(v.shape()) + " differ");
    }
  }
  Shape out_shape{xs.size()};
  out_shape.insert(out_shape.end(), inner.begin(), inner.end());
  Tensor<T> out(out_shape);
  const std::size_t width = numel(inner);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::copy_n(xs[i].value().data().begin(), width, out.data().begin() + i * width);
  }
  std::vector<std::size_t> ids;
  for (const auto& v : xs) ids.push_back(v.id);
  return tape_of(xs[0]).record(std::move(out), xs,
                               [ids = std::move(ids), width](Tape<T>& t, const Tensor<T>& g) {
    auto gv = g.data();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!t.requires_grad(ids[i])) continue;
      auto d = t.grad_buffer(ids[i]).data();
      for (std::size_t j = 0; j < width; ++j) d[j] += gv[i * width + j];
    }
  });
}

template <typename T>
Var<T> mean_rows(Var<T> x) {
  const Shape xs = x.shape();
  if (xs.empty()) throw DimensionError("mean_rows: scalar input");
  const std::size_t n = xs[0];
  const std::size_t width = x.value().size() / n;
  Tensor<T> out(Shape(xs.begin() + 1, xs.end()));
  auto in = x.value().data();
  auto o = out.data();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < width; ++j) o[j] += in[r * width + j];
  }
  const T inv = T(1) / T(n);
  for (auto& v : o) v *= inv;
  const auto ix = x.id;
  return tape_of(x).record(std::move(out), {x}, [ix, n, width, inv](Tape<T>& t, const Tensor<T>& g) {
    auto d = t.grad_buffer(ix).data();
    auto gv = g.data();
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < width; ++j) d[r * width + j] += gv[j] * inv;
    }
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T total = 0;
  for (auto v : x.value().data()) total += v;
  const auto ix = x.id;
  return tape_of(x).record(Tensor<T>::scalar(total), {x}, [ix](Tape<T>& t, const Tensor<T>& g) {
    const T s = g[0];
    for (auto& d : t.grad_buffer(ix).data()) d += s;
  });
}

template <typename T>
Var<T> mean(Var<T> x) {
  T total = 0;
  for (auto v : x.value().data()) total += v;
  const T inv = T(1) / T(x.value().size());
  const auto ix = x.id;
  return tape_of(x).record(Tensor<T>::scalar(total * inv), {x},
                           [ix, inv](Tape<T>& t, const Tensor<T>& g) {
    const T s = g[0] * inv;
    for (auto& d : t.grad_buffer(ix).data()) d += s;
  });
}

#define STPOSE_INSTANTIATE_OPS(T)                                              \
  template Var<T> add(Var<T>, Var<T>);                                         \
  template Var<T> sub(Var<T>, Var<T>);                                         \
  template Var<T> mul(Var<T>, Var<T>);                                         \
  template Var<T> scale(Var<T>, T);                                            \
  template Var<T> add_bias(Var<T>, Var<T>);                                    \
  template Var<T> matmul(Var<T>, Var<T>);                                      \
  template Var<T> batch_matmul(Var<T>, Var<T>, bool);                          \
  template Var<T> softmax(Var<T>);                                             \
  template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, T);                       \
  template Var<T> gelu(Var<T>);                                                \
  template Var<T> sigmoid(Var<T>);                                             \
  template Var<T> log(Var<T>);                                                 \
  template Var<T> reshape(Var<T>, Shape);                                      \
  template Var<T> permute(Var<T>, std::vector<std::size_t>);                   \
  template Var<T> roll(Var<T>, std::size_t, std::ptrdiff_t);                   \
  template Var<T> gather_rows(Var<T>, std::vector<std::size_t>);               \
  template Var<T> stack(const std::vector<Var<T>>&);                           \
  template Var<T> mean_rows(Var<T>);                                           \
  template Var<T> sum(Var<T>);                                                 \
  template Var<T> mean(Var<T>);

STPOSE_INSTANTIATE_OPS(float)
STPOSE_INSTANTIATE_OPS(double)

#undef STPOSE_INSTANTIATE_OPS

}  // namespace ad
}  // namespace stpose
