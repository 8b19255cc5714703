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

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "ssacrnn/numerics/tensor.hpp"

// Differentiable operations. Every function here computes its forward value
// eagerly and, if a Tape is recording and an input requires a gradient,
// records the matching backward rule.

namespace ssacrnn {

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

inline ConstMatrixMap as_matrix(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
  return ConstMatrixMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline MatrixMap as_matrix(std::vector<double>& v, std::size_t rows, std::size_t cols) {
  return MatrixMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

inline void require_rank(const char* op, const Tensor& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(a.shape()));
  }
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace detail

/// [m x k] * [k x n] -> [m x n]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank("matmul", a, 2);
  detail::require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner extents differ, " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  std::vector<double> out(m * n);
  detail::as_matrix(out, m, n).noalias() =
      detail::as_matrix(a.values(), m, k) * detail::as_matrix(b.values(), k, n);
  return detail::finish("matmul", {m, n}, std::move(out), {&a, &b},
                        [a, b, m, k, n](detail::Node& o) {
                          auto g = detail::as_matrix(std::as_const(o.grad), m, n);
                          if (a.requires_grad()) {
                            detail::as_matrix(a.node()->ensure_grad(), m, k).noalias() +=
                                g * detail::as_matrix(b.values(), k, n).transpose();
                          }
                          if (b.requires_grad()) {
                            detail::as_matrix(b.node()->ensure_grad(), k, n).noalias() +=
                                detail::as_matrix(a.values(), m, k).transpose() * g;
                          }
                        });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return detail::finish("add", a.shape(), std::move(out), {&a, &b}, [a, b](detail::Node& o) {
    for (const Tensor* t : {&a, &b}) {
      if (!t->requires_grad()) continue;
      auto& g = t->node()->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
  });
}

/// Elementwise product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return detail::finish("mul", a.shape(), std::move(out), {&a, &b}, [a, b](detail::Node& o) {
    if (a.requires_grad()) {
      auto& g = a.node()->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * b[i];
    }
    if (b.requires_grad()) {
      auto& g = b.node()->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * a[i];
    }
  });
}

/// Adds bias[n] to every row of a [.. x n] tensor.
inline Tensor add_bias(const Tensor& a, const Tensor& bias) {
  detail::require_rank("add_bias", bias, 1);
  const std::size_t n = bias.dim(0);
  if (a.shape().back() != n) {
    throw ShapeError("add_bias: " + to_string(a.shape()) + " vs bias " + to_string(bias.shape()));
  }
  std::vector<double> out(a.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias[i % n];
  return detail::finish("add_bias", a.shape(), std::move(out), {&a, &bias},
                        [a, bias, n](detail::Node& o) {
                          if (a.requires_grad()) {
                            auto& g = a.node()->ensure_grad();
                            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                          }
                          if (bias.requires_grad()) {
                            auto& g = bias.node()->ensure_grad();
                            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i % n] += o.grad[i];
                          }
                        });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.values());
  for (double& v : out) v *= s;
  return detail::finish("scale", a.shape(), std::move(out), {&a}, [a, s](detail::Node& o) {
    auto& g = a.node()->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * o.grad[i];
  });
}

inline Tensor leaky_relu(const Tensor& a, double slope) {
  std::vector<double> out(a.values());
  for (double& v : out) {
    if (v < 0.0) v *= slope;
  }
  return detail::finish("leaky_relu", a.shape(), std::move(out), {&a},
                        [a, slope](detail::Node& o) {
                          auto& g = a.node()->ensure_grad();
                          for (std::size_t i = 0; i < g.size(); ++i) {
                            g[i] += a[i] < 0.0 ? slope * o.grad[i] : o.grad[i];
                          }
                        });
}

inline Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::sigmoid(a[i]);
  auto y = out;
  return detail::finish("sigmoid", a.shape(), std::move(out), {&a},
                        [a, y = std::move(y)](detail::Node& o) {
                          auto& g = a.node()->ensure_grad();
                          for (std::size_t i = 0; i < g.size(); ++i) {
                            g[i] += o.grad[i] * y[i] * (1.0 - y[i]);
                          }
                        });
}

inline Tensor tanh(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a[i]);
  auto y = out;
  return detail::finish("tanh", a.shape(), std::move(out), {&a},
                        [a, y = std::move(y)](detail::Node& o) {
                          auto& g = a.node()->ensure_grad();
                          for (std::size_t i = 0; i < g.size(); ++i) {
                            g[i] += o.grad[i] * (1.0 - y[i] * y[i]);
                          }
                        });
}

/// Numerically stable softmax along `axis` (negative counts from the back).
inline Tensor softmax(const Tensor& a, int axis = -1) {
  const int rank = static_cast<int>(a.rank());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " +
                     to_string(a.shape()));
  }
  const auto& s = a.shape();
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (int i = axis + 1; i < rank; ++i) inner *= s[i];
  const std::size_t n = s[axis];

  std::vector<double> out(a.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double peak = a[base];
      for (std::size_t j = 1; j < n; ++j) peak = std::max(peak, a[base + j * inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(a[base + j * inner] - peak);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= total;
    }
  }
  auto y = out;
  return detail::finish(
      "softmax", a.shape(), std::move(out), {&a},
      [a, y = std::move(y), outer, inner, n](detail::Node& o) {
        auto& g = a.node()->ensure_grad();
        for (std::size_t oo = 0; oo < outer; ++oo) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = oo * n * inner + in;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += o.grad[base + j * inner] * y[base + j * inner];
            for (std::size_t j = 0; j < n; ++j) {
              const std::size_t idx = base + j * inner;
              g[idx] += y[idx] * (o.grad[idx] - dot);
            }
          }
        }
      });
}

/// Same values, new shape.
inline Tensor reshape(const Tensor& a, Shape shape) {
  if (element_count(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  return detail::finish("reshape", std::move(shape), a.values(), {&a}, [a](detail::Node& o) {
    auto& g = a.node()->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_rank("transpose", a, 2);
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  }
  return detail::finish("transpose", {n, m}, std::move(out), {&a}, [a, m, n](detail::Node& o) {
    auto& g = a.node()->ensure_grad();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += o.grad[j * m + i];
    }
  });
}

/// Concatenates tensors along `axis`; all other extents must agree.
inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis = 0) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + to_string(first));
  std::size_t outer = 1, inner = 1, total_axis = 0;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  for (const Tensor& p : parts) {
    Shape expect = first;
    expect[axis] = p.shape().size() == first.size() ? p.shape()[axis] : 0;
    if (p.shape() != expect) {
      throw ShapeError("concat: incompatible " + to_string(p.shape()) + " vs " + to_string(first));
    }
    total_axis += p.shape()[axis];
  }
  Shape shape = first;
  shape[axis] = total_axis;
  std::vector<double> out(element_count(shape));
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t block = p.shape()[axis] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.values().begin() + o * block, block,
                  out.begin() + o * total_axis * inner + offset);
    }
    offset += block;
  }
  const bool needs_grad =
      std::any_of(parts.begin(), parts.end(), [](const Tensor& t) { return t.requires_grad(); });
  Tensor result(shape, std::move(out), needs_grad);
  if (needs_grad) {
    auto node = result.node();
    Tape* tape = detail::recording_tape();
    if (tape != nullptr) {
      Tape::Entry entry;
      entry.op = "concat";
      for (const Tensor& p : parts) entry.inputs.push_back(p.node());
      entry.outputs.push_back(node);
      entry.backward = [parts, node, outer, inner, total_axis, axis]() {
        std::size_t off = 0;
        for (const Tensor& p : parts) {
          const std::size_t block = p.shape()[axis] * inner;
          if (p.requires_grad()) {
            auto& g = p.node()->ensure_grad();
            for (std::size_t o = 0; o < outer; ++o) {
              for (std::size_t i = 0; i < block; ++i) {
                g[o * block + i] += node->grad[o * total_axis * inner + off + i];
              }
            }
          }
          off += block;
        }
      };
      tape->record(std::move(entry));
    }
  }
  return result;
}

/// Row `index` of a [rows x ...] tensor, with the leading axis dropped.
inline Tensor select_row(const Tensor& a, std::size_t index) {
  if (a.rank() < 2) throw ShapeError("select_row: needs rank >= 2, got " + to_string(a.shape()));
  if (index >= a.dim(0)) throw ShapeError("select_row: index out of range");
  Shape shape(a.shape().begin() + 1, a.shape().end());
  const std::size_t width = element_count(shape);
  std::vector<double> out(a.values().begin() + index * width,
                          a.values().begin() + (index + 1) * width);
  return detail::finish("select_row", std::move(shape), std::move(out), {&a},
                        [a, index, width](detail::Node& o) {
                          auto& g = a.node()->ensure_grad();
                          for (std::size_t i = 0; i < width; ++i) g[index * width + i] += o.grad[i];
                        });
}

inline Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return detail::finish("sum", {1}, {total}, {&a}, [a](detail::Node& o) {
    auto& g = a.node()->ensure_grad();
    for (double& v : g) v += o.grad[0];
  });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

/// Multi-channel 2-D cross-correlation with zero "same" padding.
///
/// x: [C_in x H x W], kernels: [C_out x C_in x KH x KW] (odd KH, KW), bias:
/// [C_out]. Output keeps H and W. Implemented as im2col followed by a GEMM;
/// the column buffer is rebuilt in the backward pass instead of stored.
inline Tensor conv2d_same(const Tensor& x, const Tensor& kernels, const Tensor& bias) {
  detail::require_rank("conv2d_same", x, 3);
  detail::require_rank("conv2d_same", kernels, 4);
  detail::require_rank("conv2d_same", bias, 1);
  const std::size_t cin = x.dim(0), height = x.dim(1), width = x.dim(2);
  const std::size_t cout = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  if (kernels.dim(1) != cin) {
    throw ShapeError("conv2d_same: input has " + std::to_string(cin) + " channels, kernels " +
                     to_string(kernels.shape()));
  }
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw ShapeError("conv2d_same: kernel extents must be odd, got " + to_string(kernels.shape()));
  }
  if (bias.dim(0) != cout) {
    throw ShapeError("conv2d_same: bias " + to_string(bias.shape()) + " for " +
                     std::to_string(cout) + " output channels");
  }
  const std::size_t plane = height * width;
  const std::size_t patch = cin * kh * kw;
  const long ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);

  // columns[(ci, a, b), (h, w)] = x[ci, h + a - ph, w + b - pw]
  auto im2col = [=](const std::vector<double>& src) {
    std::vector<double> cols(patch * plane, 0.0);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      for (std::size_t a = 0; a < kh; ++a) {
        for (std::size_t b = 0; b < kw; ++b) {
          double* row = cols.data() + ((ci * kh + a) * kw + b) * plane;
          const long dh = static_cast<long>(a) - ph, dw = static_cast<long>(b) - pw;
          const long h0 = std::max(0L, -dh), h1 = std::min<long>(height, height - dh);
          const long w0 = std::max(0L, -dw), w1 = std::min<long>(width, width - dw);
          for (long h = h0; h < h1; ++h) {
            const double* src_row = src.data() + ci * plane + (h + dh) * width + dw;
            double* dst = row + h * width;
            for (long w = w0; w < w1; ++w) dst[w] = src_row[w];
          }
        }
      }
    }
    return cols;
  };

  std::vector<double> out(cout * plane);
  {
    const auto cols = im2col(x.values());
    auto o = detail::as_matrix(out, cout, plane);
    o.noalias() = detail::as_matrix(kernels.values(), cout, patch) *
                  detail::as_matrix(cols, patch, plane);
    for (std::size_t co = 0; co < cout; ++co) o.row(co).array() += bias[co];
  }

  return detail::finish(
      "conv2d_same", {cout, height, width}, std::move(out), {&x, &kernels, &bias},
      [=](detail::Node& o) {
        auto g = detail::as_matrix(std::as_const(o.grad), cout, plane);
        if (bias.requires_grad()) {
          auto& gb = bias.node()->ensure_grad();
          for (std::size_t co = 0; co < cout; ++co) gb[co] += g.row(co).sum();
        }
        if (kernels.requires_grad()) {
          const auto cols = im2col(x.values());
          detail::as_matrix(kernels.node()->ensure_grad(), cout, patch).noalias() +=
              g * detail::as_matrix(cols, patch, plane).transpose();
        }
        if (x.requires_grad()) {
          std::vector<double> gcols(patch * plane);
          detail::as_matrix(gcols, patch, plane).noalias() =
              detail::as_matrix(kernels.values(), cout, patch).transpose() * g;
          auto& gx = x.node()->ensure_grad();
          for (std::size_t ci = 0; ci < cin; ++ci) {
            for (std::size_t a = 0; a < kh; ++a) {
              for (std::size_t b = 0; b < kw; ++b) {
                const double* row = gcols.data() + ((ci * kh + a) * kw + b) * plane;
                const long dh = static_cast<long>(a) - ph, dw = static_cast<long>(b) - pw;
                const long h0 = std::max(0L, -dh), h1 = std::min<long>(height, height - dh);
                const long w0 = std::max(0L, -dw), w1 = std::min<long>(width, width - dw);
                for (long h = h0; h < h1; ++h) {
                  double* dst = gx.data() + ci * plane + (h + dh) * width + dw;
                  const double* src = row + h * width;
                  for (long w = w0; w < w1; ++w) dst[w] += src[w];
                }
              }
            }
          }
        }
      });
}

/// Non-overlapping 2x2 max pooling over the last two axes of [C x H x W].
/// Odd trailing rows/columns are dropped. Ties resolve to the first maximal
/// element in row-major window order, which is where the gradient goes.
inline Tensor maxpool2(const Tensor& x) {
  detail::require_rank("maxpool2", x, 3);
  const std::size_t channels = x.dim(0), height = x.dim(1), width = x.dim(2);
  if (height < 2 || width < 2) throw ShapeError("maxpool2: input too small " + to_string(x.shape()));
  const std::size_t oh = height / 2, ow = width / 2;
  std::vector<double> out(channels * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = c * height * width + (2 * i) * width + 2 * j;
        for (std::size_t a = 0; a < 2; ++a) {
          for (std::size_t b = 0; b < 2; ++b) {
            const std::size_t idx = c * height * width + (2 * i + a) * width + 2 * j + b;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t o = (c * oh + i) * ow + j;
        out[o] = x[best];
        argmax[o] = best;
      }
    }
  }
  return detail::finish("maxpool2", {channels, oh, ow}, std::move(out), {&x},
                        [x, argmax = std::move(argmax)](detail::Node& o) {
                          auto& g = x.node()->ensure_grad();
                          for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += o.grad[i];
                        });
}

/// [C x H x W] -> [H x (C*W)], keeping the time axis H as rows.
inline Tensor flatten_time_major(const Tensor& x) {
  detail::require_rank("flatten_time_major", x, 3);
  const std::size_t channels = x.dim(0), height = x.dim(1), width = x.dim(2);
  std::vector<double> out(x.size());
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t h = 0; h < height; ++h) {
      std::copy_n(x.values().begin() + (c * height + h) * width, width,
                  out.begin() + h * channels * width + c * width);
    }
  }
  return detail::finish("flatten_time_major", {height, channels * width}, std::move(out), {&x},
                        [x, channels, height, width](detail::Node& o) {
                          auto& g = x.node()->ensure_grad();
                          for (std::size_t c = 0; c < channels; ++c) {
                            for (std::size_t h = 0; h < height; ++h) {
                              for (std::size_t w = 0; w < width; ++w) {
                                g[(c * height + h) * width + w] +=
                                    o.grad[h * channels * width + c * width + w];
                              }
                            }
                          }
                        });
}

/// Weights of one LSTM direction. Gate blocks along the 4H axis are ordered
/// input, forget, candidate, output.
struct LstmWeights {
  Tensor input;      // [d_in x 4H]
  Tensor recurrent;  // [H x 4H]
  Tensor bias;       // [4H]

  std::size_t hidden() const { return recurrent.dim(0); }
  std::size_t input_dim() const { return input.dim(0); }
};

struct LstmState {
  Tensor h;
  Tensor c;
};

/// One LSTM step:
///   i = s(a_i), f = s(a_f), g = tanh(a_g), o = s(a_o) with a = x W + h W_r + b
///   c' = f * c + i * g,  h' = o * tanh(c')
inline LstmState lstm_cell(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                           const LstmWeights& w) {
  const std::size_t hidden = w.hidden();
  if (w.recurrent.rank() != 2 || w.recurrent.dim(1) != 4 * hidden || w.input.rank() != 2 ||
      w.input.dim(1) != 4 * hidden || w.bias.size() != 4 * hidden) {
    throw ShapeError("lstm_cell: inconsistent weights " + to_string(w.input.shape()) + ", " +
                     to_string(w.recurrent.shape()) + ", " + to_string(w.bias.shape()));
  }
  const std::size_t din = w.input_dim();
  if (x.size() != din || h_prev.size() != hidden || c_prev.size() != hidden) {
    throw ShapeError("lstm_cell: x " + to_string(x.shape()) + ", h " + to_string(h_prev.shape()) +
                     ", c " + to_string(c_prev.shape()) + " vs input_dim " + std::to_string(din) +
                     ", hidden " + std::to_string(hidden));
  }
  std::vector<double> pre(w.bias.values());
  {
    auto p = detail::MatrixMap(pre.data(), 1, static_cast<Eigen::Index>(4 * hidden));
    p.noalias() += detail::as_matrix(x.values(), 1, din) * detail::as_matrix(w.input.values(), din, 4 * hidden);
    p.noalias() += detail::as_matrix(h_prev.values(), 1, hidden) *
                   detail::as_matrix(w.recurrent.values(), hidden, 4 * hidden);
  }
  // gates[k*H + j]: activated gate k for unit j
  std::vector<double> gates(4 * hidden);
  for (std::size_t j = 0; j < hidden; ++j) {
    gates[j] = detail::sigmoid(pre[j]);
    gates[hidden + j] = detail::sigmoid(pre[hidden + j]);
    gates[2 * hidden + j] = std::tanh(pre[2 * hidden + j]);
    gates[3 * hidden + j] = detail::sigmoid(pre[3 * hidden + j]);
  }
  std::vector<double> c_next(hidden), tanh_c(hidden), h_next(hidden);
  for (std::size_t j = 0; j < hidden; ++j) {
    c_next[j] = gates[hidden + j] * c_prev[j] + gates[j] * gates[2 * hidden + j];
    tanh_c[j] = std::tanh(c_next[j]);
    h_next[j] = gates[3 * hidden + j] * tanh_c[j];
  }

  const bool needs_grad = detail::any_requires_grad(
      {&x, &h_prev, &c_prev, &w.input, &w.recurrent, &w.bias});
  LstmState state{Tensor({hidden}, std::move(h_next), needs_grad),
                  Tensor({hidden}, std::move(c_next), needs_grad)};
  if (needs_grad) {
    auto h_node = state.h.node();
    auto c_node = state.c.node();
    detail::record(
        "lstm_cell", {&x, &h_prev, &c_prev, &w.input, &w.recurrent, &w.bias},
        {&state.h, &state.c},
        [=, gates = std::move(gates), tanh_c = std::move(tanh_c)]() {
          std::vector<double> dpre(4 * hidden, 0.0);
          std::vector<double> dc(hidden, 0.0);
          for (std::size_t j = 0; j < hidden; ++j) {
            const double gh = h_node->grad.empty() ? 0.0 : h_node->grad[j];
            const double gc = c_node->grad.empty() ? 0.0 : c_node->grad[j];
            const double i = gates[j], f = gates[hidden + j], g = gates[2 * hidden + j],
                         o = gates[3 * hidden + j];
            const double dcj = gc + gh * o * (1.0 - tanh_c[j] * tanh_c[j]);
            dc[j] = dcj;
            dpre[j] = dcj * g * i * (1.0 - i);
            dpre[hidden + j] = dcj * c_prev[j] * f * (1.0 - f);
            dpre[2 * hidden + j] = dcj * i * (1.0 - g * g);
            dpre[3 * hidden + j] = gh * tanh_c[j] * o * (1.0 - o);
          }
          const auto dp = detail::as_matrix(std::as_const(dpre), 1, 4 * hidden);
          if (c_prev.requires_grad()) {
            auto& g = c_prev.node()->ensure_grad();
            for (std::size_t j = 0; j < hidden; ++j) g[j] += dc[j] * gates[hidden + j];
          }
          if (x.requires_grad()) {
            detail::as_matrix(x.node()->ensure_grad(), 1, din).noalias() +=
                dp * detail::as_matrix(w.input.values(), din, 4 * hidden).transpose();
          }
          if (h_prev.requires_grad()) {
            detail::as_matrix(h_prev.node()->ensure_grad(), 1, hidden).noalias() +=
                dp * detail::as_matrix(w.recurrent.values(), hidden, 4 * hidden).transpose();
          }
          if (w.input.requires_grad()) {
            detail::as_matrix(w.input.node()->ensure_grad(), din, 4 * hidden).noalias() +=
                detail::as_matrix(x.values(), 1, din).transpose() * dp;
          }
          if (w.recurrent.requires_grad()) {
            detail::as_matrix(w.recurrent.node()->ensure_grad(), hidden, 4 * hidden).noalias() +=
                detail::as_matrix(h_prev.values(), 1, hidden).transpose() * dp;
          }
          if (w.bias.requires_grad()) {
            auto& g = w.bias.node()->ensure_grad();
            for (std::size_t k = 0; k < dpre.size(); ++k) g[k] += dpre[k];
          }
        });
  }
  return state;
}

}  // namespace ssacrnn
