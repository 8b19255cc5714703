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

#include <cmath>
#include <cstddef>
#include <vector>

#include "ssacrnn/numerics/tensor.hpp"

namespace ssacrnn {

struct ProjectionResult {
  bool applied = false;          // false when the batch sum has zero L1 norm
  double tau = 0.0;              // target column L1 norm
  std::size_t zero_columns = 0;  // columns that could not be rescaled
  std::size_t incidents() const { return (applied ? 0 : 1) + zero_columns; }
};

/// Target column norm N / (C * ||sum_i x_i||_1) for a batch of N inputs to a
/// C-class layer. Returns 0 when the batch sum vanishes.
inline double equi_output_target(const std::vector<std::vector<double>>& batch, std::size_t classes) {
  if (batch.empty()) return 0.0;
  std::vector<double> total(batch.front().size(), 0.0);
  for (const auto& x : batch) {
    for (std::size_t j = 0; j < total.size(); ++j) total[j] += x[j];
  }
  double l1 = 0.0;
  for (double s : total) l1 += std::abs(s);
  if (l1 == 0.0) return 0.0;
  return static_cast<double>(batch.size()) / (static_cast<double>(classes) * l1);
}

/// L1 norm of each column of an [n_emb x C] weight.
inline std::vector<double> column_l1_norms(const Tensor& weight) {
  const std::size_t rows = weight.dim(0), cols = weight.dim(1);
  std::vector<double> norms(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) norms[c] += std::abs(weight[r * cols + c]);
  }
  return norms;
}

/// Rescales every column of `weight` ([n_emb x C]) to L1 norm tau, where tau
/// comes from the batch of inputs the layer was fed this step. Directions are
/// kept; a zero batch sum skips the step and a zero column is left alone.
inline ProjectionResult equi_output_projection(Tensor& weight, const std::vector<std::vector<double>>& batch) {
  ProjectionResult r;
  if (weight.rank() != 2) throw ShapeError("equi_output_projection: weight must be 2-D, got " + to_string(weight.shape()));
  for (const auto& x : batch) {
    if (x.size() != weight.dim(0)) {
      throw ShapeError("equi_output_projection: input width " + std::to_string(x.size()) + " does not match " +
                       to_string(weight.shape()));
    }
  }
  const std::size_t rows = weight.dim(0), cols = weight.dim(1);
  r.tau = equi_output_target(batch, cols);
  if (r.tau == 0.0) return r;
  r.applied = true;
  const auto norms = column_l1_norms(weight);
  auto w = weight.mutable_data();
  for (std::size_t c = 0; c < cols; ++c) {
    if (norms[c] == 0.0) {
      ++r.zero_columns;
      continue;
    }
    const double s = r.tau / norms[c];
    for (std::size_t i = 0; i < rows; ++i) w[i * cols + c] *= s;
  }
  return r;
}

/// Differentiable form of the same constraint for use inside a training
/// forward pass: returns weight with every column rescaled to L1 norm
/// tau(inputs), where inputs is the [N x n_emb] batch fed to the layer.
/// Gradients reach both the weight and the inputs (through tau), so the
/// network can learn the batch statistics the constraint depends on. With a
/// zero batch sum the weight passes through unchanged.
inline Tensor equi_output_weight(const Tensor& weight, const Tensor& inputs) {
  if (weight.rank() != 2 || inputs.rank() != 2 || inputs.dim(1) != weight.dim(0)) {
    throw ShapeError("equi_output_weight: weight " + to_string(weight.shape()) + " and inputs " +
                     to_string(inputs.shape()) + " do not align");
  }
  const std::size_t n = inputs.dim(0), rows = weight.dim(0), cols = weight.dim(1);
  std::vector<double> total(rows, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < rows; ++j) total[j] += inputs[i * rows + j];
  }
  double l1 = 0.0;
  for (double s : total) l1 += std::abs(s);
  const auto norms = column_l1_norms(weight);
  if (l1 == 0.0) {
    return detail::finish("equi_output_weight", weight.shape(), weight.values(), {&weight},
                          [weight](detail::Node& o) {
                            auto& g = weight.node()->ensure_grad();
                            for (std::size_t k = 0; k < g.size(); ++k) g[k] += o.grad[k];
                          });
  }
  const double tau = static_cast<double>(n) / (static_cast<double>(cols) * l1);
  std::vector<double> out(weight.size());
  for (std::size_t j = 0; j < rows; ++j) {
    for (std::size_t c = 0; c < cols; ++c) {
      out[j * cols + c] = norms[c] == 0.0 ? weight[j * cols + c] : tau * weight[j * cols + c] / norms[c];
    }
  }
  return detail::finish(
      "equi_output_weight", weight.shape(), std::move(out), {&weight, &inputs},
      [weight, inputs, total, norms, tau, l1, n, rows, cols](detail::Node& o) {
        const auto sign = [](double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); };
        // dL/dtau, summed over the rescaled columns.
        double d_tau = 0.0;
        std::vector<double> dot(cols, 0.0);
        for (std::size_t j = 0; j < rows; ++j) {
          for (std::size_t c = 0; c < cols; ++c) {
            if (norms[c] == 0.0) continue;
            const double gw = o.grad[j * cols + c] * weight[j * cols + c];
            dot[c] += gw;
            d_tau += gw / norms[c];
          }
        }
        if (weight.requires_grad()) {
          auto& g = weight.node()->ensure_grad();
          for (std::size_t j = 0; j < rows; ++j) {
            for (std::size_t c = 0; c < cols; ++c) {
              const std::size_t k = j * cols + c;
              if (norms[c] == 0.0) {
                g[k] += o.grad[k];
              } else {
                g[k] += tau * (o.grad[k] / norms[c] - sign(weight[k]) * dot[c] / (norms[c] * norms[c]));
              }
            }
          }
        }
        if (inputs.requires_grad()) {
          auto& g = inputs.node()->ensure_grad();
          const double scale = -d_tau * tau / l1;
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < rows; ++j) g[i * rows + j] += scale * sign(total[j]);
          }
        }
      });
}

}  // namespace ssacrnn
