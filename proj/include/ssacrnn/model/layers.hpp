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
#include <string>
#include <vector>

#include "ssacrnn/numerics/ops.hpp"
#include "ssacrnn/numerics/random.hpp"
#include "ssacrnn/numerics/tensor.hpp"

namespace ssacrnn {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(element_count(shape));
  for (double& x : v) x = rng.uniform(-limit, limit);
  return Tensor(std::move(shape), std::move(v), true);
}

/// y = x W + b with W: [in x out].
struct Affine {
  Tensor weight;
  Tensor bias;

  static Affine init(std::size_t in, std::size_t out, Rng& rng) {
    return {glorot_uniform({in, out}, in, out, rng), Tensor::zeros({out}, true)};
  }

  std::size_t in_dim() const { return weight.dim(0); }
  std::size_t out_dim() const { return weight.dim(1); }

  Tensor operator()(const Tensor& x) const { return add_bias(matmul(x, weight), bias); }
};

struct ConvLayer {
  Tensor kernels;  // [C_out x C_in x KH x KW]
  Tensor bias;     // [C_out]

  static ConvLayer init(std::size_t cin, std::size_t cout, std::size_t kh, std::size_t kw, Rng& rng) {
    return {glorot_uniform({cout, cin, kh, kw}, cin * kh * kw, cout * kh * kw, rng),
            Tensor::zeros({cout}, true)};
  }
};

inline LstmWeights init_lstm(std::size_t input_dim, std::size_t hidden, Rng& rng) {
  return {glorot_uniform({input_dim, 4 * hidden}, input_dim, 4 * hidden, rng),
          glorot_uniform({hidden, 4 * hidden}, hidden, 4 * hidden, rng),
          Tensor::zeros({4 * hidden}, true)};
}

/// Learned projection vector of length d, used as a [d x 1] column.
inline Tensor init_vector(std::size_t d, Rng& rng) { return glorot_uniform({d}, d, 1, rng); }

inline Tensor as_column(const Tensor& v) { return reshape(v, {v.size(), 1}); }

}  // namespace ssacrnn
