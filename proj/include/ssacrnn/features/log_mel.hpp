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
#include <complex>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "ssacrnn/common/errors.hpp"
#include "ssacrnn/numerics/tensor.hpp"

namespace ssacrnn {

/// Framing and filterbank settings. Golden files pin these values.
struct FramingOptions {
  double segment_seconds = 3.0;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  std::size_t n_mels = 40;
  std::size_t frames = 300;  // frame axis padded/trimmed to this
  double log_floor = 1e-10;
  std::size_t delta_width = 2;

  std::size_t window_samples(int sample_rate) const {
    return static_cast<std::size_t>(std::lround(window_ms * 1e-3 * sample_rate));
  }
  std::size_t hop_samples(int sample_rate) const {
    return static_cast<std::size_t>(std::lround(hop_ms * 1e-3 * sample_rate));
  }
  std::size_t segment_samples(int sample_rate) const {
    return static_cast<std::size_t>(std::lround(segment_seconds * sample_rate));
  }
  std::size_t fft_size(int sample_rate) const {
    std::size_t n = 1;
    while (n < window_samples(sample_rate)) n <<= 1;
    return n;
  }
};

/// Frames that fit entirely inside `samples` (before padding to options.frames).
inline std::size_t natural_frame_count(std::size_t samples, std::size_t window, std::size_t hop) {
  return samples < window ? 0 : (samples - window) / hop + 1;
}

/// Splits audio into consecutive non-overlapping windows of `seconds`; the
/// last window is zero-padded. A short utterance yields one padded window.
inline std::vector<std::vector<double>> segment(const std::vector<double>& audio, int sample_rate,
                                                double seconds = 3.0) {
  if (audio.empty()) throw DataError("segment: empty audio");
  const auto length = static_cast<std::size_t>(std::lround(seconds * sample_rate));
  if (length == 0) throw DataError("segment: zero-length window");
  std::vector<std::vector<double>> windows;
  for (std::size_t start = 0; start < audio.size(); start += length) {
    std::vector<double> w(length, 0.0);
    const std::size_t n = std::min(length, audio.size() - start);
    std::copy_n(audio.begin() + start, n, w.begin());
    windows.push_back(std::move(w));
  }
  return windows;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular HTK-mel filters spanning 0 Hz to Nyquist, unit peak.
struct MelFilterbank {
  std::size_t n_mels = 0;
  std::size_t n_bins = 0;               // fft_size / 2 + 1
  std::vector<double> centers_hz;       // n_mels
  std::vector<double> weights;          // n_mels x n_bins

  MelFilterbank(std::size_t mels, std::size_t fft_size, int sample_rate)
      : n_mels(mels), n_bins(fft_size / 2 + 1), weights(mels * (fft_size / 2 + 1), 0.0) {
    const double top = hz_to_mel(sample_rate / 2.0);
    std::vector<double> edges(mels + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
      edges[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(mels + 1));
    }
    centers_hz.assign(edges.begin() + 1, edges.end() - 1);
    for (std::size_t m = 0; m < mels; ++m) {
      const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
      for (std::size_t k = 0; k < n_bins; ++k) {
        const double f = static_cast<double>(k) * sample_rate / static_cast<double>(fft_size);
        double w = 0.0;
        if (f > lo && f <= mid) {
          w = (f - lo) / (mid - lo);
        } else if (f > mid && f < hi) {
          w = (hi - f) / (hi - mid);
        }
        weights[m * n_bins + k] = w;
      }
    }
  }
};

namespace detail {

/// In-place iterative radix-2 FFT; size must be a power of two.
inline void fft(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w = std::polar(1.0, angle * static_cast<double>(k));
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

inline std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n - 1));
  }
  return w;
}

}  // namespace detail

/// Log-Mel energies of one segment window: Hann-windowed STFT magnitudes
/// through the mel filterbank, then log(max(energy, floor)). Returns
/// [options.frames x n_mels]; frames reaching past the window read zeros.
inline Tensor log_mel(const std::vector<double>& window, int sample_rate,
                      const FramingOptions& options = {}) {
  if (sample_rate < 8000) {
    throw DataError("log_mel: sample rate " + std::to_string(sample_rate) + " Hz is below 8 kHz");
  }
  const std::size_t expected = options.segment_samples(sample_rate);
  if (window.size() != expected) {
    throw DataError("log_mel: window has " + std::to_string(window.size()) + " samples, expected " +
                    std::to_string(expected));
  }
  const std::size_t win = options.window_samples(sample_rate);
  const std::size_t hop = options.hop_samples(sample_rate);
  const std::size_t nfft = options.fft_size(sample_rate);
  const MelFilterbank bank(options.n_mels, nfft, sample_rate);
  const auto taper = detail::hann(win);

  std::vector<double> out(options.frames * options.n_mels);
  std::vector<std::complex<double>> buf(nfft);
  std::vector<double> magnitude(bank.n_bins);
  for (std::size_t t = 0; t < options.frames; ++t) {
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    const std::size_t start = t * hop;
    for (std::size_t i = 0; i < win && start + i < window.size(); ++i) {
      buf[i] = window[start + i] * taper[i];
    }
    detail::fft(buf);
    for (std::size_t k = 0; k < bank.n_bins; ++k) magnitude[k] = std::abs(buf[k]);
    for (std::size_t m = 0; m < options.n_mels; ++m) {
      double e = 0.0;
      const double* w = bank.weights.data() + m * bank.n_bins;
      for (std::size_t k = 0; k < bank.n_bins; ++k) e += w[k] * magnitude[k];
      out[t * options.n_mels + m] = std::log(std::max(e, options.log_floor));
    }
  }
  return Tensor({options.frames, options.n_mels}, std::move(out));
}

/// Regression deltas along the frame axis of [T x F]:
///   d_t = sum_{n=1..W} n (x_{t+n} - x_{t-n}) / (2 sum n^2), edges replicated.
inline Tensor deltas(const Tensor& x, std::size_t width = 2) {
  if (x.rank() != 2) throw ShapeError("deltas: expected [T x F], got " + to_string(x.shape()));
  const std::size_t frames = x.dim(0), bands = x.dim(1);
  if (frames <= 2 * width) {
    throw DataError("deltas: " + std::to_string(frames) + " frames is too short for width " +
                    std::to_string(width));
  }
  double denom = 0.0;
  for (std::size_t n = 1; n <= width; ++n) denom += static_cast<double>(n * n);
  denom *= 2.0;
  const long last = static_cast<long>(frames) - 1;
  std::vector<double> out(x.size(), 0.0);
  for (long t = 0; t <= last; ++t) {
    for (std::size_t n = 1; n <= width; ++n) {
      const long ahead = std::min(t + static_cast<long>(n), last);
      const long behind = std::max(t - static_cast<long>(n), 0L);
      for (std::size_t f = 0; f < bands; ++f) {
        out[t * bands + f] += static_cast<double>(n) * (x[ahead * bands + f] - x[behind * bands + f]);
      }
    }
    for (std::size_t f = 0; f < bands; ++f) out[t * bands + f] /= denom;
  }
  return Tensor(x.shape(), std::move(out));
}

/// Stacks static, delta and delta-delta planes into [3 x T x F].
inline Tensor stack_with_deltas(const Tensor& static_features, std::size_t width = 2) {
  const Tensor d1 = deltas(static_features, width);
  const Tensor d2 = deltas(d1, width);
  std::vector<double> v;
  v.reserve(3 * static_features.size());
  for (const Tensor* t : {&static_features, &d1, &d2}) v.insert(v.end(), t->data().begin(), t->data().end());
  return Tensor({3, static_features.dim(0), static_features.dim(1)}, std::move(v));
}

}  // namespace ssacrnn
