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
#include <stdexcept>
#include <string>
#include <vector>

#include "ssacrnn/numerics/tensor.hpp"

namespace ssacrnn {

enum class OptimizerKind { nadam, adam };

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::nadam ? "nadam" : "adam"; }

inline OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "nadam") return OptimizerKind::nadam;
  if (s == "adam") return OptimizerKind::adam;
  throw std::invalid_argument("unknown optimizer '" + s + "' (expected nadam or adam)");
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::nadam;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First and second moments, one slot per parameter tensor.
struct MomentState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;
};

/// True when every gradient entry of every parameter is finite.
inline bool gradients_finite(const std::vector<Tensor>& params) {
  for (const Tensor& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) {
      if (!std::isfinite(g)) return false;
    }
  }
  return true;
}

/// Global L2 norm of all gradients. Parameters without a gradient count as 0.
inline double gradient_norm(const std::vector<Tensor>& params) {
  double total = 0.0;
  for (const Tensor& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) total += g * g;
  }
  return std::sqrt(total);
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping. max_norm <= 0 disables clipping.
inline double clip_gradients(std::vector<Tensor>& params, double max_norm) {
  const double norm = gradient_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Tensor& p : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.mutable_grad()) g *= s;
    }
  }
  return norm;
}

/// One Adam-family update from the gradients currently held by `params`.
///
/// NAdam (Dozat) uses the lookahead first moment
///   m_hat = b1 * m_t / (1 - b1^(t+1)) + (1 - b1) * g / (1 - b1^t)
/// in place of Adam's m_t / (1 - b1^t). Returns false, leaving parameters
/// and moments untouched, if any gradient is non-finite.
inline bool nadam_step(std::vector<Tensor>& params, MomentState& state, const OptimizerConfig& cfg) {
  if (!gradients_finite(params)) return false;
  if (state.m.empty()) {
    for (const Tensor& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw std::logic_error("nadam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                           " tensors, got " + std::to_string(params.size()));
  }
  const std::size_t t = ++state.step;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double b1t = std::pow(b1, static_cast<double>(t));
  const double b1t_next = b1t * b1;
  const double b2t = std::pow(b2, static_cast<double>(t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    if (!p.has_grad()) continue;
    auto w = p.mutable_data();
    auto g = p.grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = cfg.kind == OptimizerKind::nadam
                               ? b1 * m[i] / (1.0 - b1t_next) + (1.0 - b1) * g[i] / (1.0 - b1t)
                               : m[i] / (1.0 - b1t);
      const double v_hat = v[i] / (1.0 - b2t);
      w[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
  return true;
}

}  // namespace ssacrnn
