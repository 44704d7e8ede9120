// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "stpose/params.hpp"

namespace stpose {

/// Builds a scalar loss on the scope's tape from bound parameters.
using LossBuilder = std::function<Var<double>(const Scope<double>&)>;

struct ParamGradError {
  std::string name;
  std::size_t checked = 0;     // number of entries compared
  double rel_error = 0.0;      // |a - cd| / max(|a|, |cd|, 1e-12) over checked entries
  double max_abs_error = 0.0;  // worst single entry
  double analytic_norm = 0.0;
};

struct GradCheckReport {
  std::vector<ParamGradError> params;
  double max_rel_error = 0.0;
  double loss = 0.0;

  bool passed(double tol) const { return max_rel_error < tol; }
};

struct GradCheckOptions {
  double step = 1e-5;
  // 0 checks every entry; otherwise at most this many evenly spaced entries
  // per parameter tensor.
  std::size_t max_entries_per_param = 0;
};

/// Compares reverse-mode gradients of `loss` against central differences
/// (f(x+h) - f(x-h)) / 2h for each named parameter. Norms are L2 over the
/// checked entries of one parameter tensor.
GradCheckReport finite_diff_check(const LossBuilder& loss, const ParamStore<double>& params,
                                  const GradCheckOptions& options = {});

}  // namespace stpose
