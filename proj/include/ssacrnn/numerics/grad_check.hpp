// Copyright 2026 The SSA-CRNN Authors. All Rights Reserved.
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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "ssacrnn/numerics/tensor.hpp"

namespace ssacrnn {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  // The floor keeps coordinates whose true gradient is ~0 from dominating.
  double denominator_floor = 1e-6;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  std::size_t failed = 0;

  bool passed() const { return failed == 0; }
};

/// Compares tape gradients of a scalar function against central differences
/// (f(x+e) - f(x-e)) / 2e for every coordinate of every input.
///
/// `f` must rebuild its graph from the current values of `inputs` on each
/// call. Inputs are perturbed in place and restored afterwards.
inline GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                                  const GradCheckOptions& options = {}) {
  std::vector<std::vector<double>> analytic;
  {
    for (Tensor& t : inputs) t.zero_grad();
    Tape tape;
    Tensor loss = f();
    tape.backward(loss);
    for (const Tensor& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());
  }

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + options.step;
      const double up = f().item();
      values[i] = saved - options.step;
      const double down = f().item();
      values[i] = saved;

      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[k][i];
      const double denom =
          std::max({std::abs(a), std::abs(numeric), options.denominator_floor});
      const double err = std::abs(a - numeric) / denom;
      ++report.checked;
      if (err > options.tolerance) ++report.failed;
      if (err > report.max_relative_error || report.checked == 1) {
        report.max_relative_error = err;
        report.worst_input = k;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace ssacrnn
