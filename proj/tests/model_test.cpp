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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "ssacrnn/model/checkpoint.hpp"
#include "ssacrnn/model/classifier.hpp"
#include "ssacrnn/model/predict.hpp"
#include "ssacrnn/numerics/grad_check.hpp"
#include "test_util.hpp"

namespace ssacrnn {
namespace {

using testing::random_tensor;

CrnnConfig tiny_config() {
  CrnnConfig c;
  c.conv_channels = {3, 4};
  c.linear_units = 6;
  c.lstm_cells = 3;
  return c;
}

const std::vector<std::string> kEmotions = {"happy", "angry", "sad", "neutral"};

Tensor weighted(const Tensor& t, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(t, random_tensor(t.shape(), rng)));
}

std::vector<Tensor> tensors_of(const Classifier& c) {
  std::vector<Tensor> out;
  for (const auto& p : c.parameters()) out.push_back(p.tensor);
  return out;
}

TEST(CrnnConfigTest, ReferenceDefaults) {
  CrnnConfig c;
  ASSERT_EQ(c.conv_channels.size(), 6u);
  EXPECT_EQ(c.conv_channels.front(), 128u);
  for (std::size_t i = 1; i < c.conv_channels.size(); ++i) EXPECT_EQ(c.conv_channels[i], 256u);
  EXPECT_EQ(c.kernel_time, 5u);
  EXPECT_EQ(c.kernel_freq, 3u);
  EXPECT_EQ(c.linear_units, 768u);
  EXPECT_EQ(c.encoder_dim(), 256u);
  EXPECT_EQ(c.flattened_width(), 5120u);
}

TEST(CrnnEncodeTest, ReferenceShapeTrace) {
  CrnnConfig cfg;
  Rng rng(1);
  EncoderParams p = EncoderParams::init(cfg, rng);
  Tensor x = random_tensor({3, 300, 40}, rng);
  EncoderTrace trace;
  NoGradGuard no_grad;
  EncoderState s = crnn_encode(x, cfg, p, &trace);
  ASSERT_EQ(trace.conv_shapes.size(), 6u);
  EXPECT_EQ(trace.conv_shapes[0], (Shape{128, 150, 20}));
  EXPECT_EQ(trace.conv_shapes[5], (Shape{256, 150, 20}));
  EXPECT_EQ(trace.flattened, (Shape{150, 5120}));
  EXPECT_EQ(trace.pre_recurrent.shape(), (Shape{150, 768}));
  EXPECT_EQ(s.h.shape(), (Shape{150, 256}));
}

TEST(CrnnEncodeTest, ZeroInputZeroParamsGivesZeroStates) {
  CrnnConfig cfg = tiny_config();
  Rng rng(2);
  EncoderParams p = EncoderParams::init(cfg, rng);
  for (auto& n : p.parameters()) std::fill(n.tensor.mutable_data().begin(), n.tensor.mutable_data().end(), 0.0);
  EncoderState s = crnn_encode(Tensor::zeros({3, 32, 40}), cfg, p);
  for (double v : s.h.data()) EXPECT_EQ(v, 0.0);
}

TEST(CrnnEncodeTest, TimeReversalWithFlippedKernelsReversesPreRecurrentFeatures) {
  // Same padding makes the conv/pool/linear stack commute with time reversal
  // once every kernel is mirrored along its time axis (and T is even so the
  // pooling windows line up).
  CrnnConfig cfg = tiny_config();
  Rng rng(3);
  EncoderParams p = EncoderParams::init(cfg, rng);
  EncoderParams mirrored = EncoderParams::init(cfg, rng);
  mirrored.projection = p.projection;
  mirrored.forward = p.forward;
  mirrored.backward = p.backward;
  for (std::size_t l = 0; l < p.convs.size(); ++l) {
    const auto& k = p.convs[l].kernels;
    const std::size_t co = k.dim(0), ci = k.dim(1), kh = k.dim(2), kw = k.dim(3);
    std::vector<double> flipped(k.size());
    for (std::size_t a = 0; a < co * ci; ++a) {
      for (std::size_t t = 0; t < kh; ++t) {
        for (std::size_t f = 0; f < kw; ++f) flipped[(a * kh + t) * kw + f] = k[(a * kh + (kh - 1 - t)) * kw + f];
      }
    }
    mirrored.convs[l] = {Tensor(k.shape(), flipped), p.convs[l].bias};
  }
  const std::size_t frames = 32;
  Tensor x = random_tensor({3, frames, 40}, rng);
  std::vector<double> rev(x.size());
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t f = 0; f < 40; ++f) rev[(c * frames + t) * 40 + f] = x[(c * frames + (frames - 1 - t)) * 40 + f];
    }
  }
  EncoderTrace a, b;
  crnn_encode(x, cfg, p, &a);
  crnn_encode(Tensor(x.shape(), rev), cfg, mirrored, &b);
  const std::size_t out_frames = a.pre_recurrent.dim(0), units = a.pre_recurrent.dim(1);
  for (std::size_t t = 0; t < out_frames; ++t) {
    for (std::size_t u = 0; u < units; ++u) {
      EXPECT_NEAR(a.pre_recurrent[t * units + u], b.pre_recurrent[(out_frames - 1 - t) * units + u], 1e-12);
    }
  }
}

TEST(CrnnEncodeTest, RejectsWrongInputShapeAndNonFinite) {
  CrnnConfig cfg = tiny_config();
  Rng rng(4);
  EncoderParams p = EncoderParams::init(cfg, rng);
  EXPECT_THROW(crnn_encode(Tensor::zeros({2, 32, 40}), cfg, p), ShapeError);
  std::vector<double> v(3 * 8 * 40, 0.0);
  v[5] = std::numeric_limits<double>::infinity();
  try {
    crnn_encode(Tensor({3, 8, 40}, v), cfg, p);
    FAIL();
  } catch (const NonFiniteError& e) {
    EXPECT_EQ(e.layer(), 0u);
  }
}

EncoderState random_state(Rng& rng, std::size_t frames, std::size_t d, double spread = 1.0) {
  return {random_tensor({frames, d}, rng, false, -spread, spread)};
}

TEST(SelfAttentionTest, ZeroWeightsGiveUniformAlphaAndFrameMean) {
  Rng rng(5);
  EncoderState h = random_state(rng, 7, 4);
  auto out = self_attention(h, {Tensor::zeros({4})});
  for (double a : out.alpha.data()) EXPECT_NEAR(a, 1.0 / 7.0, 1e-15);
  for (std::size_t j = 0; j < 4; ++j) {
    double mean = 0.0;
    for (std::size_t t = 0; t < 7; ++t) mean += h.h[t * 4 + j] / 7.0;
    EXPECT_NEAR(out.context[j], mean, 1e-14);
  }
}

TEST(SelfAttentionTest, DominantFrameSaturates) {
  Rng rng(6);
  std::vector<double> v(5 * 3, 0.0);
  for (std::size_t j = 0; j < 3; ++j) v[2 * 3 + j] = rng.uniform(-1, 1);
  // w = e0 and frame 2 scores +50 above the rest.
  v[2 * 3 + 0] = 50.0;
  EncoderState h{Tensor({5, 3}, v)};
  auto out = self_attention(h, {Tensor({3}, {1.0, 0.0, 0.0})});
  EXPECT_NEAR(out.alpha[2], 1.0, 1e-20 + 1e-15);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(out.context[j], v[2 * 3 + j], 1e-18 * 50 + 1e-12);
}

TEST(SelfAttentionTest, ShiftingEveryScoreLeavesAlphaUnchanged) {
  Rng rng(7);
  EncoderState h = random_state(rng, 9, 4);
  Tensor w = random_tensor({4}, rng);
  double norm2 = 0.0;
  for (double x : w.data()) norm2 += x * x;
  const double k = 3.7;
  std::vector<double> shifted(h.h.values());
  for (std::size_t t = 0; t < 9; ++t) {
    for (std::size_t j = 0; j < 4; ++j) shifted[t * 4 + j] += k * w[j] / norm2;
  }
  auto a = self_attention(h, {w});
  auto b = self_attention({Tensor({9, 4}, shifted)}, {w});
  for (std::size_t t = 0; t < 9; ++t) EXPECT_NEAR(a.alpha[t], b.alpha[t], 1e-10);
}

TEST(SelfAttentionTest, ZeroWeightsArePermutationInvariant) {
  Rng rng(8);
  EncoderState h = random_state(rng, 6, 3);
  std::vector<double> perm(h.h.size());
  const std::size_t order[] = {3, 0, 5, 1, 4, 2};
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t j = 0; j < 3; ++j) perm[t * 3 + j] = h.h[order[t] * 3 + j];
  }
  auto a = self_attention(h, {Tensor::zeros({3})});
  auto b = self_attention({Tensor({6, 3}, perm)}, {Tensor::zeros({3})});
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(a.context[j], b.context[j], 1e-15);
}

TEST(SelfAttentionTest, WeightsNormalizeAndContextStaysInHull) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t frames = 1 + rng.below(20), d = 1 + rng.below(8);
    EncoderState h = random_state(rng, frames, d, 5.0);
    auto out = self_attention(h, {random_tensor({d}, rng, false, -3, 3)});
    double total = 0.0;
    for (double a : out.alpha.data()) {
      EXPECT_GT(a, 0.0);
      total += a;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    for (std::size_t j = 0; j < d; ++j) {
      double lo = 1e300, hi = -1e300;
      for (std::size_t t = 0; t < frames; ++t) lo = std::min(lo, h.h[t * d + j]), hi = std::max(hi, h.h[t * d + j]);
      EXPECT_GE(out.context[j], lo - 1e-12);
      EXPECT_LE(out.context[j], hi + 1e-12);
    }
  }
}

// Straight-line transcription of the speaker attention equations.
std::pair<std::vector<double>, std::vector<double>> dense_ssa(const Tensor& h_em, const Tensor& h_sp,
                                                              const SsaParams& p) {
  const std::size_t T = h_em.dim(0), d = h_em.dim(1), ds = h_sp.dim(1);
  auto proj = [](const Tensor& h, const Tensor& w, std::size_t t, std::size_t width) {
    double s = 0.0;
    for (std::size_t j = 0; j < width; ++j) s += h[t * width + j] * w[j];
    return s;
  };
  std::vector<double> q(T), K(2 * T), V(2 * T);
  for (std::size_t t = 0; t < T; ++t) {
    q[t] = proj(h_em, p.w_query, t, d);
    K[t] = proj(h_em, p.w_key_em, t, d);
    K[T + t] = proj(h_sp, p.w_key_sp, t, ds);
    V[t] = proj(h_em, p.w_value_em, t, d);
    V[T + t] = proj(h_sp, p.w_value_sp, t, ds);
  }
  std::vector<double> alpha(T, 0.0), c(d, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> row(2 * T);
    double peak = -1e300;
    for (std::size_t s = 0; s < 2 * T; ++s) {
      row[s] = q[t] * K[s] / std::sqrt(static_cast<double>(T));
      peak = std::max(peak, row[s]);
    }
    double z = 0.0;
    for (double& r : row) z += (r = std::exp(r - peak));
    for (std::size_t s = 0; s < 2 * T; ++s) alpha[t] += row[s] / z * V[s];
  }
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < d; ++j) c[j] += alpha[t] * h_em[t * d + j];
  }
  return {alpha, c};
}

SsaParams random_ssa(Rng& rng, std::size_t d, std::size_t ds) {
  return {random_tensor({d}, rng), random_tensor({d}, rng), random_tensor({ds}, rng), random_tensor({d}, rng),
          random_tensor({ds}, rng)};
}

TEST(SpeakerAttentionTest, ZeroWeightsGiveZeroOutput) {
  Rng rng(10);
  SsaParams p{Tensor::zeros({4}), Tensor::zeros({4}), Tensor::zeros({4}), Tensor::zeros({4}), Tensor::zeros({4})};
  auto out = speaker_attention(random_state(rng, 6, 4), random_state(rng, 6, 4), p);
  for (double a : out.alpha.data()) EXPECT_EQ(a, 0.0);
  for (double c : out.context.data()) EXPECT_EQ(c, 0.0);
}

TEST(SpeakerAttentionTest, SilencedSpeakerProjectionsIgnoreSpeakerStates) {
  Rng rng(11);
  SsaParams p = random_ssa(rng, 4, 4);
  p.w_key_sp = Tensor::zeros({4});
  p.w_value_sp = Tensor::zeros({4});
  EncoderState em = random_state(rng, 6, 4);
  auto a = speaker_attention(em, random_state(rng, 6, 4), p);
  auto b = speaker_attention(em, random_state(rng, 6, 4, 10.0), p);
  EXPECT_EQ(a.alpha.values(), b.alpha.values());
  EXPECT_EQ(a.context.values(), b.context.values());
}

TEST(SpeakerAttentionTest, MatchesDenseTranscription) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    SsaParams p = random_ssa(rng, 5, 3);
    EncoderState em = random_state(rng, 6, 5), sp = random_state(rng, 6, 3);
    auto out = speaker_attention(em, sp, p);
    auto [alpha, c] = dense_ssa(em.h, sp.h, p);
    for (std::size_t t = 0; t < 6; ++t) EXPECT_NEAR(out.alpha[t], alpha[t], 1e-12);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(out.context[j], c[j], 1e-12);
  }
}

TEST(SpeakerAttentionTest, FrameCountMismatchRejected) {
  Rng rng(13);
  EXPECT_THROW(speaker_attention(random_state(rng, 6, 4), random_state(rng, 5, 4), random_ssa(rng, 4, 4)),
               ShapeError);
}

TEST(ClassifyTest, ZeroEverythingGivesUniformPosteriors) {
  HeadParams head{{Tensor::zeros({8, 5}), Tensor::zeros({5})}, {Tensor::zeros({5, 4}), Tensor::zeros({4})}};
  auto out = classify(Tensor::zeros({8}), head);
  for (double p : out.posteriors.data()) EXPECT_EQ(p, 0.25);
}

TEST(ClassifyTest, PosteriorArgmaxFollowsLogits) {
  Rng rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    HeadParams head = HeadParams::init(6, 5, 4, rng);
    head.classify.bias = random_tensor({4}, rng);
    auto out = classify(random_tensor({6}, rng, false, -4, 4), head);
    double total = 0.0;
    for (double p : out.posteriors.data()) total += p;
    EXPECT_NEAR(total, 1.0, 1e-12);
    auto argmax = [](std::span<const double> v) { return std::max_element(v.begin(), v.end()) - v.begin(); };
    EXPECT_EQ(argmax(out.posteriors.data()), argmax(out.logits.data()));
  }
}

TEST(ClassifierTest, ClassificationWeightShapeAndGradient) {
  Classifier c = make_classifier(tiny_config(), Pooling::self_attention, 5, kEmotions, 3);
  EXPECT_EQ(c.head.classify.weight.shape(), (Shape{5, 4}));
  Rng rng(15);
  Tape tape;
  tape.backward(weighted(forward_sp(c, random_tensor({3, 16, 40}, rng)).head.logits, 1));
  EXPECT_EQ(c.head.classify.weight.grad().size(), 20u);
}

TEST(ClassifierTest, ForwardIsDeterministic) {
  Classifier c = make_classifier(tiny_config(), Pooling::self_attention, 5, kEmotions, 4);
  Rng rng(16);
  Tensor x = random_tensor({3, 32, 40}, rng);
  auto a = forward_sp(c, x), b = forward_sp(c, x);
  EXPECT_EQ(a.head.posteriors.values(), b.head.posteriors.values());
  EXPECT_EQ(a.state.h.values(), b.state.h.values());
}

TEST(ClassifierTest, ReferenceSpeakerTowerShapeContract) {
  std::vector<std::string> speakers;
  for (int i = 0; i < 8; ++i) speakers.push_back("spk" + std::to_string(i));
  Classifier sp = make_classifier(CrnnConfig{}, Pooling::self_attention, 64, speakers, 5);
  Rng rng(17);
  NoGradGuard no_grad;
  auto out = forward_sp(sp, random_tensor({3, 300, 40}, rng));
  EXPECT_EQ(out.state.h.shape(), (Shape{150, 256}));
  EXPECT_EQ(out.head.embedding.shape(), (Shape{1, 64}));
  EXPECT_EQ(out.head.posteriors.shape(), (Shape{1, 8}));
}

TEST(ClassifierTest, SpeakerTowerGradientMatchesFiniteDifferences) {
  Classifier sp = make_classifier(tiny_config(), Pooling::self_attention, 5, {"a", "b", "c", "d", "e"}, 6);
  Rng rng(18);
  Tensor x = random_tensor({3, 32, 40}, rng);
  auto f = [&] {
    auto out = forward_sp(sp, x);
    return add(weighted(out.head.logits, 2), weighted(out.head.posteriors, 3));
  };
  auto report = grad_check(f, tensors_of(sp));
  EXPECT_LT(report.max_relative_error, 1e-3) << sp.parameters()[report.worst_input].name << "["
                                             << report.worst_index << "]";
}

TEST(ClassifierTest, EmotionTowerGradientMatchesFiniteDifferencesAndSkipsSpeakerTower) {
  Classifier sp = make_classifier(tiny_config(), Pooling::self_attention, 5, {"a", "b", "c"}, 7);
  sp.freeze();
  Classifier em = make_classifier(tiny_config(), Pooling::speaker_attention, 4, kEmotions, 8);
  Rng rng(19);
  Tensor x = random_tensor({3, 32, 40}, rng);
  auto f = [&] {
    auto out = forward_em(em, x, sp);
    return add(weighted(out.head.logits, 4), weighted(out.head.posteriors, 5));
  };
  auto report = grad_check(f, tensors_of(em));
  EXPECT_LT(report.max_relative_error, 1e-3) << em.parameters()[report.worst_input].name << "["
                                             << report.worst_index << "]";
  for (const auto& p : sp.parameters()) EXPECT_FALSE(p.tensor.has_grad()) << p.name;
}

TEST(ClassifierTest, UnfrozenSpeakerTowerRejected) {
  Classifier sp = make_classifier(tiny_config(), Pooling::self_attention, 5, {"a", "b"}, 9);
  Classifier em = make_classifier(tiny_config(), Pooling::speaker_attention, 4, kEmotions, 10);
  EXPECT_THROW(forward_em(em, Tensor::zeros({3, 16, 40}), sp), std::logic_error);
}

TEST(CheckpointTest, RoundTripStoresFloat32AndRegistry) {
  Classifier c = make_classifier(tiny_config(), Pooling::speaker_attention, 4, kEmotions, 11);
  const std::string bytes = encode_checkpoint(c, "em", 11, {{"sp_checkpoint_hash", "feed"}});
  auto loaded = decode_checkpoint(decode_container(bytes), "test");
  EXPECT_EQ(loaded.header["stage"], "em");
  EXPECT_EQ(loaded.header["meta"]["sp_checkpoint_hash"], "feed");
  EXPECT_EQ(loaded.classifier.classes, kEmotions);
  EXPECT_EQ(loaded.classifier.config, c.config);
  auto a = c.parameters(), b = loaded.classifier.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    for (std::size_t k = 0; k < a[i].tensor.size(); ++k) {
      EXPECT_EQ(b[i].tensor[k], static_cast<double>(static_cast<float>(a[i].tensor[k])));
    }
  }
  EXPECT_FALSE(loaded.classifier.frozen);
  c.freeze();
  EXPECT_TRUE(decode_checkpoint(decode_container(encode_checkpoint(c, "sp", 1)), "t").classifier.frozen);
  // Re-encoding the decoded classifier is byte-stable.
  EXPECT_EQ(encode_checkpoint(loaded.classifier, "em", 11, {{"sp_checkpoint_hash", "feed"}}), bytes);
}

TEST(PredictTest, UtterancePosteriorsAreSegmentMeans) {
  std::vector<FeatureBlock> blocks = {{Tensor::zeros({1}), "s", "sad", "u1", 0},
                                      {Tensor::zeros({1}), "s", "sad", "u1", 1},
                                      {Tensor::zeros({1}), "s", "happy", "u2", 0}};
  std::vector<SegmentPrediction> seg = {{{0.6, 0.4}, {1.0}}, {{0.2, 0.8}, {3.0}}, {{0.9, 0.1}, {0.0}}};
  auto u = aggregate_utterances(blocks, seg);
  ASSERT_EQ(u.size(), 2u);
  EXPECT_NEAR(u[0].posteriors[1], 0.6, 1e-15);
  EXPECT_EQ(u[0].predicted, 1u);
  EXPECT_EQ(u[0].embedding[0], 2.0);
  EXPECT_EQ(u[1].predicted, 0u);
  EXPECT_EQ(u[1].label, "happy");
}

}  // namespace
}  // namespace ssacrnn
