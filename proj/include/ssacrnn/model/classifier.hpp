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
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssacrnn/model/attention.hpp"
#include "ssacrnn/model/encoder.hpp"
#include "ssacrnn/model/layers.hpp"

namespace ssacrnn {

/// Embedding layer followed by the classification layer. classify.weight is
/// the [n_emb x n_classes] matrix the equi-output projection constrains.
struct HeadParams {
  Affine embed;
  Affine classify;

  static HeadParams init(std::size_t d, std::size_t n_emb, std::size_t n_classes, Rng& rng) {
    return {Affine::init(d, n_emb, rng), Affine::init(n_emb, n_classes, rng)};
  }

  std::vector<NamedTensor> parameters() const {
    return {{"embed.weight", embed.weight},
            {"embed.bias", embed.bias},
            {"classify.weight", classify.weight},
            {"classify.bias", classify.bias}};
  }
};

struct HeadOutput {
  Tensor embedding;   // [1 x n_emb]
  Tensor logits;      // [1 x n_classes]
  Tensor posteriors;  // [1 x n_classes]
};

inline HeadOutput classify(const Tensor& context, const HeadParams& head) {
  Tensor row = context.rank() == 2 ? context : reshape(context, {1, context.size()});
  Tensor embedding = head.embed(row);
  Tensor logits = head.classify(embedding);
  return {embedding, logits, softmax(logits, 1)};
}

enum class Pooling { self_attention, speaker_attention };

inline std::string to_string(Pooling p) {
  return p == Pooling::self_attention ? "self_attention" : "speaker_attention";
}

inline Pooling pooling_from_string(const std::string& s) {
  if (s == "self_attention") return Pooling::self_attention;
  if (s == "speaker_attention") return Pooling::speaker_attention;
  throw std::invalid_argument("unknown pooling '" + s + "'");
}

/// One ACRNN tower with its pooling layer and head. The speaker classifier
/// and the plain emotion classifiers pool with self attention; the speaker
/// attentive emotion classifier pools with speaker attention and reads a
/// frozen speaker classifier's encoder states.
struct Classifier {
  CrnnConfig config;
  Pooling pooling = Pooling::self_attention;
  std::size_t embedding_size = 0;
  std::vector<std::string> classes;
  EncoderParams encoder;
  SaParams sa;
  SsaParams ssa;
  HeadParams head;
  bool frozen = false;

  std::size_t n_classes() const { return classes.size(); }

  std::vector<NamedTensor> parameters() const {
    std::vector<NamedTensor> out = encoder.parameters();
    const auto pool = pooling == Pooling::self_attention ? sa.parameters() : ssa.parameters();
    out.insert(out.end(), pool.begin(), pool.end());
    const auto h = head.parameters();
    out.insert(out.end(), h.begin(), h.end());
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.tensor.size();
    return n;
  }

  /// Stops gradient tracking on every parameter.
  void freeze() {
    for (auto& p : parameters()) {
      p.tensor.set_requires_grad(false);
      p.tensor.clear_grad();
    }
    frozen = true;
  }

  /// Deep copy with independent parameter storage.
  Classifier clone() const {
    Classifier c = *this;
    auto copy_tensor = [](Tensor& t) { t = t.clone(t.requires_grad()); };
    for (auto& conv : c.encoder.convs) copy_tensor(conv.kernels), copy_tensor(conv.bias);
    copy_tensor(c.encoder.projection.weight), copy_tensor(c.encoder.projection.bias);
    for (LstmWeights* w : {&c.encoder.forward, &c.encoder.backward}) {
      copy_tensor(w->input), copy_tensor(w->recurrent), copy_tensor(w->bias);
    }
    if (c.sa.w_att.defined()) copy_tensor(c.sa.w_att);
    for (Tensor* t : {&c.ssa.w_query, &c.ssa.w_key_em, &c.ssa.w_key_sp, &c.ssa.w_value_em, &c.ssa.w_value_sp}) {
      if (t->defined()) copy_tensor(*t);
    }
    copy_tensor(c.head.embed.weight), copy_tensor(c.head.embed.bias);
    copy_tensor(c.head.classify.weight), copy_tensor(c.head.classify.bias);
    return c;
  }
};

/// Fresh classifier with seeded initialization. `speaker_width` is the
/// encoder width of the speaker tower (speaker attention only).
inline Classifier make_classifier(const CrnnConfig& cfg, Pooling pooling, std::size_t embedding_size,
                                  std::vector<std::string> classes, std::uint64_t seed,
                                  std::size_t speaker_width = 0) {
  if (classes.size() < 2) throw std::invalid_argument("make_classifier: need at least two classes");
  Rng rng(seed);
  Classifier c;
  c.config = cfg;
  c.pooling = pooling;
  c.embedding_size = embedding_size;
  c.classes = std::move(classes);
  c.encoder = EncoderParams::init(cfg, rng);
  const std::size_t d = cfg.encoder_dim();
  if (pooling == Pooling::self_attention) {
    c.sa = SaParams::init(d, rng);
  } else {
    c.ssa = SsaParams::init(d, speaker_width ? speaker_width : d, rng);
  }
  c.head = HeadParams::init(d, embedding_size, c.classes.size(), rng);
  return c;
}

struct ClassifierOutput {
  EncoderState state;
  AttentionOutput attention;
  HeadOutput head;
};

inline ClassifierOutput run_classifier(const Classifier& c, const Tensor& x, const EncoderState* speaker_state) {
  ClassifierOutput out;
  out.state = crnn_encode(x, c.config, c.encoder);
  if (c.pooling == Pooling::self_attention) {
    out.attention = self_attention(out.state, c.sa);
  } else {
    if (speaker_state == nullptr) throw std::invalid_argument("speaker attention needs speaker encoder states");
    out.attention = speaker_attention(out.state, *speaker_state, c.ssa);
  }
  out.head = classify(out.attention.context, c.head);
  return out;
}

/// Speaker tower: encode -> self attention -> head. The returned encoder
/// states are what the emotion tower's speaker attention consumes.
inline ClassifierOutput forward_sp(const Classifier& sp, const Tensor& x) {
  if (sp.pooling != Pooling::self_attention) throw std::invalid_argument("forward_sp: speaker tower must use self attention");
  return run_classifier(sp, x, nullptr);
}

/// Encoder states of a frozen speaker tower, computed without recording.
inline EncoderState speaker_states(const Classifier& sp, const Tensor& x) {
  if (!sp.frozen) throw std::logic_error("speaker classifier must be frozen before conditioning on it");
  NoGradGuard no_grad;
  return crnn_encode(x, sp.config, sp.encoder);
}

/// Emotion tower conditioned on precomputed speaker states (the speaker tower
/// is frozen, so its states for a given segment never change).
inline ClassifierOutput forward_em(const Classifier& em, const Tensor& x, const EncoderState& speaker) {
  if (em.pooling != Pooling::speaker_attention) throw std::invalid_argument("forward_em: emotion tower must use speaker attention");
  return run_classifier(em, x, &speaker);
}

inline ClassifierOutput forward_em(const Classifier& em, const Tensor& x, const Classifier& sp) {
  return forward_em(em, x, speaker_states(sp, x));
}

}  // namespace ssacrnn
