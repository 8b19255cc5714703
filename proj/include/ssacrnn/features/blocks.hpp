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

#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "ssacrnn/common/errors.hpp"
#include "ssacrnn/features/log_mel.hpp"
#include "ssacrnn/numerics/tensor.hpp"

namespace ssacrnn {

inline const std::vector<std::string>& default_emotions() {
  static const std::vector<std::string> labels = {"happy", "angry", "sad", "neutral"};
  return labels;
}

struct UtteranceRecord {
  std::vector<double> audio;  // mono, [-1, 1]
  int sample_rate = 0;
  std::string speaker_id;
  std::string emotion_label;
  std::string utterance_id;
};

/// One 3-channel log-Mel segment: [3 x T x n_mels], channels static, delta,
/// delta-delta.
struct FeatureBlock {
  Tensor data;
  std::string speaker_id;
  std::string emotion_label;
  std::string utterance_id;
  std::size_t segment_index = 0;
};

inline void validate(const UtteranceRecord& u, const std::vector<std::string>& emotions) {
  if (u.sample_rate <= 0) throw DataError(u.utterance_id + ": sample rate must be positive");
  if (u.audio.empty()) throw DataError(u.utterance_id + ": empty audio");
  bool known = false;
  for (const auto& e : emotions) known |= (e == u.emotion_label);
  if (!known) throw DataError(u.utterance_id + ": unknown emotion label '" + u.emotion_label + "'");
}

/// segment -> log_mel -> deltas for every window of an utterance.
inline std::vector<FeatureBlock> extract_blocks(const UtteranceRecord& u,
                                                const FramingOptions& options = {}) {
  std::vector<FeatureBlock> blocks;
  const auto windows = segment(u.audio, u.sample_rate, options.segment_seconds);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    blocks.push_back({stack_with_deltas(log_mel(windows[i], u.sample_rate, options), options.delta_width),
                      u.speaker_id, u.emotion_label, u.utterance_id, i});
  }
  return blocks;
}

struct SpeakerStats {
  std::vector<double> mean;    // per channel
  std::vector<double> stddev;  // per channel, after variance clamp
};

constexpr double kMinSpeakerVariance = 1e-8;

/// Per-speaker, per-channel mean and standard deviation pooled over every
/// cell of the speaker's blocks. Channels with variance below 1e-8 are
/// clamped and reported in `warnings`.
inline std::map<std::string, SpeakerStats> fit_speaker_stats(const std::vector<FeatureBlock>& blocks,
                                                             std::vector<std::string>* warnings = nullptr) {
  std::map<std::string, std::vector<const FeatureBlock*>> by_speaker;
  for (const auto& b : blocks) by_speaker[b.speaker_id].push_back(&b);

  std::map<std::string, SpeakerStats> stats;
  for (const auto& [speaker, list] : by_speaker) {
    const std::size_t channels = list.front()->data.dim(0);
    SpeakerStats s{std::vector<double>(channels, 0.0), std::vector<double>(channels, 0.0)};
    for (std::size_t ch = 0; ch < channels; ++ch) {
      double total = 0.0;
      std::size_t count = 0;
      for (const FeatureBlock* b : list) {
        if (b->data.dim(0) != channels) throw ShapeError("speaker " + speaker + ": blocks disagree on channels");
        const std::size_t plane = b->data.size() / channels;
        for (std::size_t i = 0; i < plane; ++i) total += b->data[ch * plane + i];
        count += plane;
      }
      const double mu = total / static_cast<double>(count);
      double sq = 0.0;
      for (const FeatureBlock* b : list) {
        const std::size_t plane = b->data.size() / channels;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = b->data[ch * plane + i] - mu;
          sq += d * d;
        }
      }
      double var = sq / static_cast<double>(count);
      if (var < kMinSpeakerVariance) {
        if (warnings) {
          warnings->push_back("speaker " + speaker + " channel " + std::to_string(ch) +
                              ": variance clamped to 1e-8");
        }
        var = kMinSpeakerVariance;
      }
      s.mean[ch] = mu;
      s.stddev[ch] = std::sqrt(var);
    }
    stats.emplace(speaker, std::move(s));
  }
  return stats;
}

inline std::vector<FeatureBlock> apply_speaker_stats(const std::vector<FeatureBlock>& blocks,
                                                     const std::map<std::string, SpeakerStats>& stats) {
  std::vector<FeatureBlock> out;
  out.reserve(blocks.size());
  for (const auto& b : blocks) {
    const auto it = stats.find(b.speaker_id);
    if (it == stats.end()) throw DataError("no normalization statistics for speaker " + b.speaker_id);
    const std::size_t channels = b.data.dim(0);
    const std::size_t plane = b.data.size() / channels;
    std::vector<double> v(b.data.values());
    for (std::size_t ch = 0; ch < channels; ++ch) {
      for (std::size_t i = 0; i < plane; ++i) {
        v[ch * plane + i] = (v[ch * plane + i] - it->second.mean[ch]) / it->second.stddev[ch];
      }
    }
    FeatureBlock nb = b;
    nb.data = Tensor(b.data.shape(), std::move(v));
    out.push_back(std::move(nb));
  }
  return out;
}

/// Zero mean, unit variance per speaker and channel.
inline std::vector<FeatureBlock> speaker_normalize(const std::vector<FeatureBlock>& blocks,
                                                   std::vector<std::string>* warnings = nullptr) {
  return apply_speaker_stats(blocks, fit_speaker_stats(blocks, warnings));
}

}  // namespace ssacrnn
