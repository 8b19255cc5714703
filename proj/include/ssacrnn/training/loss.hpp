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
#include <string>
#include <vector>

#include "ssacrnn/numerics/tensor.hpp"

namespace ssacrnn {

namespace detail {

inline void require_targets(const char* op, const Tensor& x, const std::vector<std::size_t>& targets) {
  if (x.rank() != 2 || x.dim(0) != targets.size() || targets.empty()) {
    throw ShapeError(std::string(op) + ": expected [N x C] with N = " + std::to_string(targets.size()) +
                     " targets, got " + to_string(x.shape()));
  }
  for (std::size_t t : targets) {
    if (t >= x.dim(1)) {
      throw ShapeError(std::string(op) + ": target " + std::to_string(t) + " out of range for " +
                       std::to_string(x.dim(1)) + " classes");
    }
  }
}

}  // namespace detail

/// Probabilities below this are clamped before the log.
inline constexpr double kProbabilityFloor = 1e-12;

/// Mean over the batch of -log p[target], for rows that are already
/// posteriors.
inline Tensor cross_entropy(const Tensor& posteriors, const std::vector<std::size_t>& targets) {
  detail::require_targets("cross_entropy", posteriors, targets);
  const std::size_t n = targets.size(), classes = posteriors.dim(1);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) loss -= std::log(std::max(posteriors[i * classes + targets[i]], kProbabilityFloor));
  loss /= static_cast<double>(n);
  return detail::finish("cross_entropy", {}, {loss}, {&posteriors},
                        [posteriors, targets, n, classes](detail::Node& o) {
                          auto& g = posteriors.node()->ensure_grad();
                          for (std::size_t i = 0; i < n; ++i) {
                            const std::size_t k = i * classes + targets[i];
                            if (posteriors[k] > kProbabilityFloor) {
                              g[k] -= o.grad[0] / (static_cast<double>(n) * posteriors[k]);
                            }
                          }
                        });
}

/// Cross-entropy taken directly from logits. Same value as
/// cross_entropy(softmax(logits)), with gradient (softmax - onehot) / N and
/// no underflow for confident rows.
inline Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& targets) {
  detail::require_targets("softmax_cross_entropy", logits, targets);
  const std::size_t n = targets.size(), classes = logits.dim(1);
  std::vector<double> probs(logits.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &logits.data()[i * classes];
    const double peak = *std::max_element(row, row + classes);
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) total += (probs[i * classes + c] = std::exp(row[c] - peak));
    for (std::size_t c = 0; c < classes; ++c) probs[i * classes + c] /= total;
    loss += std::log(total) - (row[targets[i]] - peak);
  }
  loss /= static_cast<double>(n);
  return detail::finish("softmax_cross_entropy", {}, {loss}, {&logits},
                        [logits, targets, probs = std::move(probs), n, classes](detail::Node& o) {
                          auto& g = logits.node()->ensure_grad();
                          const double s = o.grad[0] / static_cast<double>(n);
                          for (std::size_t i = 0; i < n; ++i) {
                            for (std::size_t c = 0; c < classes; ++c) {
                              const std::size_t k = i * classes + c;
                              g[k] += s * (probs[k] - (c == targets[i] ? 1.0 : 0.0));
                            }
                          }
                        });
}

}  // namespace ssacrnn
