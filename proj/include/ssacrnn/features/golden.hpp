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
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "ssacrnn/features/cache.hpp"
#include "ssacrnn/features/wav.hpp"
#include "ssacrnn/numerics/random.hpp"

namespace ssacrnn {

/// Reference signals whose feature blocks are pinned by golden files: a
/// 440 Hz tone, white noise and digital silence, each 3 s at 16 kHz.
struct GoldenSignal {
  std::string name;
  std::vector<double> samples;
};

inline constexpr int kGoldenSampleRate = 16000;

inline std::vector<GoldenSignal> golden_signals() {
  const std::size_t n = 3 * kGoldenSampleRate;
  std::vector<double> tone(n), noise(n), silence(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    tone[i] = 0.5 * std::sin(2.0 * std::numbers::pi * 440.0 * static_cast<double>(i) / kGoldenSampleRate);
  }
  Rng rng(20260101);
  for (double& v : noise) v = std::clamp(0.1 * rng.normal(), -1.0, 1.0);
  return {{"tone", tone}, {"noise", noise}, {"silence", silence}};
}

/// Feature block 0 of a WAV, encoded exactly as the cache stores it.
inline std::string golden_block_bytes(const std::filesystem::path& wav_path, const std::string& name) {
  const WavAudio wav = read_wav(wav_path);
  const FramingOptions framing;
  const UtteranceRecord u{wav.samples, wav.sample_rate, "golden", default_emotions().front(), name};
  return encode_block(extract_blocks(u, framing).at(0), framing, file_hash(wav_path));
}

}  // namespace ssacrnn
