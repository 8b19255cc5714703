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

#include "ssacrnn/model/layers.hpp"
#include "ssacrnn/numerics/ops.hpp"

namespace ssacrnn {

/// CRNN tower layout. Defaults are the reference widths; the kernel is 5
/// frames by 3 mel bands and pooling (2x2) follows the first convolution.
struct CrnnConfig {
  std::vector<std::size_t> conv_channels = {128, 256, 256, 256, 256, 256};
  std::size_t kernel_time = 5;
  std::size_t kernel_freq = 3;
  std::size_t linear_units = 768;
  std::size_t lstm_cells = 128;  // per direction
  std::size_t input_channels = 3;
  std::size_t n_mels = 40;
  double leaky_slope = 0.01;

  std::size_t encoder_dim() const { return 2 * lstm_cells; }
  std::size_t pooled_bands() const { return n_mels / 2; }
  std::size_t flattened_width() const { return conv_channels.back() * pooled_bands(); }

  void validate() const {
    if (conv_channels.empty()) throw std::invalid_argument("CrnnConfig: at least one convolution is required");
    if (kernel_time % 2 == 0 || kernel_freq % 2 == 0) throw std::invalid_argument("CrnnConfig: kernel extents must be odd");
    if (n_mels < 2) throw std::invalid_argument("CrnnConfig: need at least 2 mel bands to pool");
    if (linear_units == 0 || lstm_cells == 0) throw std::invalid_argument("CrnnConfig: zero-width layer");
    for (auto c : conv_channels) {
      if (c == 0) throw std::invalid_argument("CrnnConfig: zero-width convolution");
    }
  }

  bool operator==(const CrnnConfig&) const = default;
};

class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& where, std::size_t layer)
      : std::runtime_error("non-finite activation in " + where + " (layer " + std::to_string(layer) + ")"),
        layer_(layer) {}
  std::size_t layer() const { return layer_; }

 private:
  std::size_t layer_;
};

struct EncoderParams {
  std::vector<ConvLayer> convs;
  Affine projection;
  LstmWeights forward;
  LstmWeights backward;

  static EncoderParams init(const CrnnConfig& cfg, Rng& rng) {
    cfg.validate();
    EncoderParams p;
    std::size_t cin = cfg.input_channels;
    for (std::size_t cout : cfg.conv_channels) {
      p.convs.push_back(ConvLayer::init(cin, cout, cfg.kernel_time, cfg.kernel_freq, rng));
      cin = cout;
    }
    p.projection = Affine::init(cfg.flattened_width(), cfg.linear_units, rng);
    p.forward = init_lstm(cfg.linear_units, cfg.lstm_cells, rng);
    p.backward = init_lstm(cfg.linear_units, cfg.lstm_cells, rng);
    return p;
  }

  std::vector<NamedTensor> parameters() const {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < convs.size(); ++i) {
      out.push_back({"conv" + std::to_string(i) + ".kernels", convs[i].kernels});
      out.push_back({"conv" + std::to_string(i) + ".bias", convs[i].bias});
    }
    out.push_back({"projection.weight", projection.weight});
    out.push_back({"projection.bias", projection.bias});
    for (const auto& [name, w] : {std::pair{"lstm_fw", &forward}, std::pair{"lstm_bw", &backward}}) {
      out.push_back({std::string(name) + ".input", w->input});
      out.push_back({std::string(name) + ".recurrent", w->recurrent});
      out.push_back({std::string(name) + ".bias", w->bias});
    }
    return out;
  }
};

/// Per-frame BLSTM outputs h: [T' x 2*cells].
struct EncoderState {
  Tensor h;

  std::size_t frames() const { return h.dim(0); }
  std::size_t width() const { return h.dim(1); }
};

/// Intermediate shapes and the pre-recurrent features, for inspection.
struct EncoderTrace {
  std::vector<Shape> conv_shapes;  // after each conv (+ pool for the first)
  Shape flattened;
  Tensor pre_recurrent;            // [T' x linear_units]
};

namespace detail {

inline void require_finite(const Tensor& t, const char* where, std::size_t layer) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw NonFiniteError(where, layer);
  }
}

inline Tensor run_lstm(const Tensor& inputs, const LstmWeights& w, bool reverse) {
  const std::size_t steps = inputs.dim(0), hidden = w.hidden();
  LstmState s{Tensor::zeros({hidden}), Tensor::zeros({hidden})};
  std::vector<Tensor> rows(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = reverse ? steps - 1 - k : k;
    s = lstm_cell(select_row(inputs, t), s.h, s.c, w);
    rows[t] = reshape(s.h, {1, hidden});
  }
  return concat(rows, 0);
}

}  // namespace detail

/// conv (+2x2 pool after the first) -> time-major flatten -> linear ->
/// BLSTM. Input [C_in x T x n_mels]; output h: [T/2 x 2*cells].
/// Activations after every conv and after the linear layer are leaky ReLU.
inline EncoderState crnn_encode(const Tensor& x, const CrnnConfig& cfg, const EncoderParams& p,
                                EncoderTrace* trace = nullptr) {
  if (x.rank() != 3 || x.dim(0) != cfg.input_channels || x.dim(2) != cfg.n_mels) {
    throw ShapeError("crnn_encode: expected [" + std::to_string(cfg.input_channels) + " x T x " +
                     std::to_string(cfg.n_mels) + "], got " + to_string(x.shape()));
  }
  if (x.dim(1) < 2) throw ShapeError("crnn_encode: need at least two frames");
  Tensor y = x;
  for (std::size_t i = 0; i < p.convs.size(); ++i) {
    y = leaky_relu(conv2d_same(y, p.convs[i].kernels, p.convs[i].bias), cfg.leaky_slope);
    if (i == 0) y = maxpool2(y);
    detail::require_finite(y, "convolution", i);
    if (trace) trace->conv_shapes.push_back(y.shape());
  }
  Tensor flat = flatten_time_major(y);
  if (trace) trace->flattened = flat.shape();
  Tensor z = leaky_relu(p.projection(flat), cfg.leaky_slope);
  detail::require_finite(z, "projection", p.convs.size());
  if (trace) trace->pre_recurrent = z;
  Tensor h = concat({detail::run_lstm(z, p.forward, false), detail::run_lstm(z, p.backward, true)}, 1);
  detail::require_finite(h, "blstm", p.convs.size() + 1);
  return {h};
}

}  // namespace ssacrnn
