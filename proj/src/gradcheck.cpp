// Copyright (C) 2026 The stpose Authors
// SPDX-License-Identifier: Apache-2.0
//

#include "stpose/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace stpose {
namespace {

double evaluate(const LossBuilder& loss, const ParamStore<double>& params) {
  Tape<double> tape;
  ParamBinder<double> binder(tape, params, /*requires_grad=*/false);
  Var<double> out = loss(Scope<double>(binder));
  if (out.value().size() != 1) {
    throw ContractError("finite_diff_check: loss must be scalar, got " +
                        shape_string(out.shape()));
  }
  return out.value()[0];
}

std::vector<std::size_t> pick_entries(std::size_t n, std::size_t limit) {
  std::vector<std::size_t> idx;
  if (limit == 0 || limit >= n) {
    idx.resize(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
  }
  for (std::size_t i = 0; i < limit; ++i) idx.push_back(i * n / limit);
  return idx;
}

}  // namespace

GradCheckReport finite_diff_check(const LossBuilder& loss, const ParamStore<double>& params,
                                  const GradCheckOptions& options) {
  const double h = options.step;
  if (!(h >= 1e-7 && h <= 1e-3)) {
    throw ContractError("finite_diff_check: step must lie in [1e-7, 1e-3]");
  }

  GradCheckReport report;
  GradMap<double> analytic;
  {
    Tape<double> tape;
    ParamBinder<double> binder(tape, params, /*requires_grad=*/true);
    Var<double> out = loss(Scope<double>(binder));
    report.loss = out.value().size() == 1 ? out.value()[0] : 0.0;
    analytic = tape.backward(out);
  }
  if (evaluate(loss, params) != report.loss || evaluate(loss, params) != report.loss) {
    throw ContractError("finite_diff_check: loss function is not deterministic");
  }

  ParamStore<double> work = params;
  for (auto& [name, tensor] : work.entries()) {
    auto it = analytic.find(name);
    // Parameters the builder never touched have an implicit zero gradient.
    const Tensor<double> grad = it != analytic.end() ? it->second : Tensor<double>(tensor.shape());
    double diff2 = 0.0, a2 = 0.0, c2 = 0.0, worst = 0.0;
    const auto entries = pick_entries(tensor.size(), options.max_entries_per_param);
    for (std::size_t i : entries) {
      const double orig = tensor[i];
      tensor[i] = orig + h;
      const double plus = evaluate(loss, work);
      tensor[i] = orig - h;
      const double minus = evaluate(loss, work);
      tensor[i] = orig;
      const double cd = (plus - minus) / (2.0 * h);
      const double a = grad[i];
      diff2 += (a - cd) * (a - cd);
      a2 += a * a;
      c2 += cd * cd;
      worst = std::max(worst, std::abs(a - cd));
    }
    ParamGradError e;
    e.name = name;
    e.checked = entries.size();
    e.analytic_norm = std::sqrt(a2);
    e.max_abs_error = worst;
    e.rel_error = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(c2), 1e-12});
    report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
    report.params.push_back(std::move(e));
  }
  return report;
}

}  // namespace stpose
