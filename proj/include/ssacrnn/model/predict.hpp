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

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "ssacrnn/features/blocks.hpp"
#include "ssacrnn/model/classifier.hpp"

namespace ssacrnn {

struct SegmentPrediction {
  std::vector<double> posteriors;
  std::vector<double> embedding;
};

/// Segment-level posteriors and embeddings, without recording gradients.
/// `speaker` is required when `model` pools with speaker attention.
inline SegmentPrediction predict_segment(const Classifier& model, const Tensor& x, const Classifier* speaker) {
  NoGradGuard no_grad;
  ClassifierOutput out = model.pooling == Pooling::speaker_attention
                             ? forward_em(model, x, *speaker)
                             : run_classifier(model, x, nullptr);
  return {out.head.posteriors.values(), out.head.embedding.values()};
}

struct UtterancePrediction {
  std::string utterance_id;
  std::string speaker_id;
  std::string label;              // reference label of the utterance
  std::vector<double> posteriors; // mean over segments
  std::vector<double> embedding;  // mean over segments
  std::size_t predicted = 0;      // argmax of posteriors
  std::size_t segments = 0;
};

/// Averages segment posteriors (and embeddings) per utterance and takes the
/// argmax. Output order follows first appearance of each utterance.
inline std::vector<UtterancePrediction> aggregate_utterances(const std::vector<FeatureBlock>& blocks,
                                                             const std::vector<SegmentPrediction>& segments,
                                                             bool label_is_speaker = false) {
  std::vector<UtterancePrediction> out;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    auto [it, inserted] = index.emplace(b.utterance_id, out.size());
    if (inserted) {
      out.push_back({b.utterance_id, b.speaker_id, label_is_speaker ? b.speaker_id : b.emotion_label,
                     std::vector<double>(segments[i].posteriors.size(), 0.0),
                     std::vector<double>(segments[i].embedding.size(), 0.0), 0, 0});
    }
    auto& u = out[it->second];
    for (std::size_t k = 0; k < u.posteriors.size(); ++k) u.posteriors[k] += segments[i].posteriors[k];
    for (std::size_t k = 0; k < u.embedding.size(); ++k) u.embedding[k] += segments[i].embedding[k];
    ++u.segments;
  }
  for (auto& u : out) {
    for (double& p : u.posteriors) p /= static_cast<double>(u.segments);
    for (double& e : u.embedding) e /= static_cast<double>(u.segments);
    std::size_t best = 0;
    for (std::size_t k = 1; k < u.posteriors.size(); ++k) {
      if (u.posteriors[k] > u.posteriors[best]) best = k;
    }
    u.predicted = best;
  }
  return out;
}

}  // namespace ssacrnn
