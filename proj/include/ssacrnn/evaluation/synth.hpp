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
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "ssacrnn/common/container.hpp"
#include "ssacrnn/common/errors.hpp"
#include "ssacrnn/features/blocks.hpp"
#include "ssacrnn/features/cache.hpp"
#include "ssacrnn/features/wav.hpp"
#include "ssacrnn/numerics/random.hpp"

namespace ssacrnn {

/// Parameters of the synthetic corpus. Speaker s speaks on a harmonic
/// series around its own fundamental; emotion e sets the spectral tilt of the
/// harmonics and the rate of an amplitude modulation. Both cues survive the
/// log-Mel front end, so either label is learnable from the features.
struct SynthSpec {
  std::size_t n_speakers = 8;
  std::vector<std::string> emotions = default_emotions();
  std::size_t utterances_per_cell = 5;
  // Per-emotion multiplier on utterances_per_cell (empty = all 1), e.g.
  // {8, 1, 1, 1} for a skewed corpus.
  std::vector<std::size_t> emotion_ratio;
  std::uint64_t seed = 0;
  int sample_rate = 16000;
  double seconds = 3.0;
  double noise = 0.003;  // standard deviation of the white noise floor
};

struct SynthUtterance {
  UtteranceRecord record;
  std::string gender;
};

inline std::string synth_speaker_id(std::size_t s) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "spk%02zu", s + 1);
  return buf;
}

inline double synth_fundamental(std::size_t speaker) { return 160.0 + 45.0 * static_cast<double>(speaker); }

inline double synth_tilt(std::size_t emotion) { return 0.4 + 0.6 * static_cast<double>(emotion); }

inline double synth_modulation_hz(std::size_t emotion) { return 2.0 + 2.5 * static_cast<double>(emotion); }

/// Generates the corpus in memory, speaker-major then emotion then utterance.
inline std::vector<SynthUtterance> synth_utterances(const SynthSpec& spec) {
  if (spec.n_speakers < 4) throw ConfigError("synthetic corpus needs at least 4 speakers");
  if (spec.emotions.size() < 2) throw ConfigError("synthetic corpus needs at least 2 emotions");
  if (!spec.emotion_ratio.empty() && spec.emotion_ratio.size() != spec.emotions.size()) {
    throw ConfigError("emotion ratio must have one entry per emotion");
  }
  Rng rng(spec.seed);
  const auto n = static_cast<std::size_t>(std::lround(spec.seconds * spec.sample_rate));
  const double two_pi = 2.0 * std::numbers::pi;
  const double nyquist_cap = std::min(4000.0, 0.45 * spec.sample_rate);
  std::vector<SynthUtterance> out;
  for (std::size_t s = 0; s < spec.n_speakers; ++s) {
    for (std::size_t e = 0; e < spec.emotions.size(); ++e) {
      const std::size_t count = spec.utterances_per_cell * (spec.emotion_ratio.empty() ? 1 : spec.emotion_ratio[e]);
      for (std::size_t u = 0; u < count; ++u) {
        const double f0 = synth_fundamental(s) + rng.uniform(-3.0, 3.0);
        const double am = synth_modulation_hz(e) * rng.uniform(0.95, 1.05);
        const double am_phase = rng.uniform(0.0, two_pi);
        const std::size_t harmonics = static_cast<std::size_t>(nyquist_cap / f0);
        std::vector<double> amp(harmonics), phase(harmonics);
        for (std::size_t k = 0; k < harmonics; ++k) {
          amp[k] = std::pow(static_cast<double>(k + 1), -synth_tilt(e));
          phase[k] = rng.uniform(0.0, two_pi);
        }
        std::vector<double> x(n);
        double peak = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double t = static_cast<double>(i) / spec.sample_rate;
          double v = 0.0;
          for (std::size_t k = 0; k < harmonics; ++k) v += amp[k] * std::sin(two_pi * f0 * (k + 1) * t + phase[k]);
          v *= 0.2 + 0.8 * 0.5 * (1.0 + std::sin(two_pi * am * t + am_phase));
          x[i] = v;
          peak = std::max(peak, std::abs(v));
        }
        for (double& v : x) v = 0.7 * v / peak + spec.noise * rng.normal();
        char id[64];
        std::snprintf(id, sizeof id, "%s_%s_%03zu", synth_speaker_id(s).c_str(), spec.emotions[e].c_str(), u + 1);
        out.push_back({{std::move(x), spec.sample_rate, synth_speaker_id(s), spec.emotions[e], id},
                       s % 2 == 0 ? "F" : "M"});
      }
    }
  }
  return out;
}

/// Writes the corpus as 16-bit WAVs under `dir`/audio plus `dir`/manifest.tsv
/// (paths relative to `dir`). Returns the manifest entries.
inline std::vector<ManifestEntry> synth_corpus(const std::filesystem::path& dir, const SynthSpec& spec) {
  std::vector<ManifestEntry> entries;
  std::filesystem::create_directories(dir / "audio");
  for (const auto& u : synth_utterances(spec)) {
    const std::filesystem::path rel = std::filesystem::path("audio") / (u.record.utterance_id + ".wav");
    write_file_atomic(dir / rel, encode_wav(u.record.audio, u.record.sample_rate));
    entries.push_back({rel, u.record.utterance_id, u.record.speaker_id, u.record.emotion_label, u.gender});
  }
  write_file_atomic(dir / "manifest.tsv", format_manifest(entries));
  return entries;
}

}  // namespace ssacrnn
