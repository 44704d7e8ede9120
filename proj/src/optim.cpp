// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "stpose/optim.hpp"

#include <cmath>
#include <numbers>

namespace stpose {

template <typename T>
AdamState<T> AdamState<T>::zeros_like(const ParamStore<T>& params) {
  AdamState s;
  for (const auto& [name, p] : params.entries()) {
    s.m.add(name, Tensor<T>(p.shape()));
    s.v.add(name, Tensor<T>(p.shape()));
  }
  return s;
}

template <typename T>
void adamw_step(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& m, Tensor<T>& v, std::uint64_t t,
                double lr, double weight_decay, const AdamWHyper& hyper) {
  if (t < 1) throw ContractError("adamw_step: t must be at least 1");
  if (grad.shape() != param.shape() || m.shape() != param.shape() || v.shape() != param.shape()) {
    throw DimensionError("adamw_step: shapes differ for param " + shape_string(param.shape()));
  }
  const double b1 = hyper.beta1, b2 = hyper.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  const double decay = 1.0 - lr * weight_decay;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * g;
    const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double mhat = mi / c1, vhat = vi / c2;
    param[i] = static_cast<T>(static_cast<double>(param[i]) * decay - lr * mhat / (std::sqrt(vhat) + hyper.eps));
  }
}

template <typename T>
void adamw_step(ParamStore<T>& params, const GradMap<T>& grads, AdamState<T>& state, double lr,
                double weight_decay, const AdamWHyper& hyper) {
  for (const auto& [name, _] : grads) {
    if (!params.contains(name)) throw ContractError("adamw_step: gradient for unknown parameter '" + name + "'");
  }
  ++state.t;
  for (auto& [name, p] : params.entries()) {
    const auto it = grads.find(name);
    const Tensor<T> zero = it == grads.end() ? Tensor<T>(p.shape()) : Tensor<T>();
    adamw_step(p, it == grads.end() ? zero : it->second, state.m.at(name), state.v.at(name), state.t, lr,
               weight_decay, hyper);
  }
}

double lr_schedule(double e, double w, double lr0) {
  if (!(w >= 0.0 && w < 1.0)) throw ContractError("lr_schedule: warm-up fraction must be in [0, 1)");
  if (!(e >= 0.0 && e <= 1.0)) throw ContractError("lr_schedule: epoch fraction must be in [0, 1]");
  if (e < w) return lr0 * (e / w);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * (e - w) / (1.0 - w)));
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adamw_step(Tensor<float>&, const Tensor<float>&, Tensor<float>&, Tensor<float>&, std::uint64_t,
                         double, double, const AdamWHyper&);
template void adamw_step(Tensor<double>&, const Tensor<double>&, Tensor<double>&, Tensor<double>&,
                         std::uint64_t, double, double, const AdamWHyper&);
template void adamw_step(ParamStore<float>&, const GradMap<float>&, AdamState<float>&, double, double,
                         const AdamWHyper&);
template void adamw_step(ParamStore<double>&, const GradMap<double>&, AdamState<double>&, double, double,
                         const AdamWHyper&);

}  // namespace stpose
