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

#include "ssacrnn/model/encoder.hpp"
#include "ssacrnn/model/layers.hpp"
#include "ssacrnn/numerics/ops.hpp"

namespace ssacrnn {

/// Attention pooling weights: one scoring vector over the encoder width.
struct SaParams {
  Tensor w_att;  // [d]

  static SaParams init(std::size_t d, Rng& rng) { return {init_vector(d, rng)}; }
  std::vector<NamedTensor> parameters() const { return {{"sa.w_att", w_att}}; }
};

/// Query/key/value projection vectors. The query and the "em" halves read the
/// emotion tower's states; the "sp" halves read the speaker tower's.
struct SsaParams {
  Tensor w_query;     // [d_em]
  Tensor w_key_em;    // [d_em]
  Tensor w_key_sp;    // [d_sp]
  Tensor w_value_em;  // [d_em]
  Tensor w_value_sp;  // [d_sp]

  static SsaParams init(std::size_t d_em, std::size_t d_sp, Rng& rng) {
    SsaParams p;
    p.w_query = init_vector(d_em, rng);
    p.w_key_em = init_vector(d_em, rng);
    p.w_key_sp = init_vector(d_sp, rng);
    p.w_value_em = init_vector(d_em, rng);
    p.w_value_sp = init_vector(d_sp, rng);
    return p;
  }

  std::vector<NamedTensor> parameters() const {
    return {{"ssa.w_query", w_query},
            {"ssa.w_key_em", w_key_em},
            {"ssa.w_key_sp", w_key_sp},
            {"ssa.w_value_em", w_value_em},
            {"ssa.w_value_sp", w_value_sp}};
  }
};

struct AttentionOutput {
  Tensor alpha;    // [T']
  Tensor context;  // [1 x d]
};

/// alpha = softmax over frames of h_t . w;  context = sum_t alpha_t h_t.
inline AttentionOutput self_attention(const EncoderState& state, const SaParams& p) {
  const std::size_t frames = state.frames();
  Tensor scores = reshape(matmul(state.h, as_column(p.w_att)), {1, frames});
  Tensor alpha = softmax(scores, 1);
  return {reshape(alpha, {frames}), matmul(alpha, state.h)};
}

/// Self speaker attention.
///
///   q = h_em w_q                                   [T']
///   K = [h_em w_k_em ; h_sp w_k_sp]                [2T']
///   V = [h_em w_v_em ; h_sp w_v_sp]                [2T']
///   alpha = softmax_rows(q K^T / sqrt(T')) V       [T']
///   context = sum_t alpha_t h_em_t
///
/// alpha is not a distribution: it is a signed per-frame weight.
inline AttentionOutput speaker_attention(const EncoderState& em, const EncoderState& sp, const SsaParams& p) {
  const std::size_t frames = em.frames();
  if (sp.frames() != frames) {
    throw ShapeError("speaker_attention: emotion tower has " + std::to_string(frames) +
                     " frames, speaker tower " + std::to_string(sp.frames()));
  }
  Tensor query = matmul(em.h, as_column(p.w_query));                                             // [T' x 1]
  Tensor keys = concat({matmul(em.h, as_column(p.w_key_em)), matmul(sp.h, as_column(p.w_key_sp))}, 0);
  Tensor values =
      concat({matmul(em.h, as_column(p.w_value_em)), matmul(sp.h, as_column(p.w_value_sp))}, 0);
  Tensor scores = scale(matmul(query, transpose(keys)), 1.0 / std::sqrt(static_cast<double>(frames)));
  Tensor alpha = matmul(softmax(scores, 1), values);  // [T' x 1]
  Tensor alpha_row = reshape(alpha, {1, frames});
  return {reshape(alpha, {frames}), matmul(alpha_row, em.h)};
}

}  // namespace ssacrnn
