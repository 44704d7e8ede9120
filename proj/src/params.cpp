// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "stpose/params.hpp"

namespace stpose {

void ParamInit::normal(std::string_view name, Shape shape, double stddev) {
  Tensor<double> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.data()) v = dist(state_->rng);
  state_->store.add(full_name(name), std::move(t));
}

void ParamInit::zeros(std::string_view name, Shape shape) {
  state_->store.add(full_name(name), Tensor<double>(std::move(shape), 0.0));
}

void ParamInit::ones(std::string_view name, Shape shape) {
  state_->store.add(full_name(name), Tensor<double>(std::move(shape), 1.0));
}

}  // namespace stpose
