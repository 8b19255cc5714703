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

#include <cmath>
#include <limits>
#include <set>

#include "ssacrnn/model/checkpoint.hpp"
#include "ssacrnn/numerics/grad_check.hpp"
#include "ssacrnn/training/trainer.hpp"
#include "test_util.hpp"
#include "toy_corpus.hpp"

namespace ssacrnn {
namespace {

using testing::random_tensor;

TEST(CrossEntropyTest, PerfectPredictionHasZeroLoss) {
  EXPECT_LE(cross_entropy(Tensor({2, 3}, {1, 0, 0, 0, 0, 1}), {0, 2}).item(), 1e-6);
}

TEST(CrossEntropyTest, UniformPosteriorsGiveLogClassCount) {
  EXPECT_NEAR(cross_entropy(Tensor({1, 4}, {0.25, 0.25, 0.25, 0.25}), {3}).item(), std::log(4.0), 1e-15);
  EXPECT_NEAR(softmax_cross_entropy(Tensor::zeros({3, 4}), {0, 1, 2}).item(), std::log(4.0), 1e-15);
}

TEST(CrossEntropyTest, TargetOutOfRangeRejected) {
  EXPECT_THROW(cross_entropy(Tensor({1, 4}, {0.25, 0.25, 0.25, 0.25}), {4}), ShapeError);
  EXPECT_THROW(softmax_cross_entropy(Tensor::zeros({2, 4}), {0}), ShapeError);
}

TEST(CrossEntropyTest, GradientsMatchFiniteDifferences) {
  Rng rng(1);
  Tensor logits = random_tensor({5, 4}, rng, true, -2, 2);
  const std::vector<std::size_t> targets = {0, 3, 1, 1, 2};
  EXPECT_LT(grad_check([&] { return softmax_cross_entropy(logits, targets); }, {logits}).max_relative_error, 1e-5);
  EXPECT_LT(grad_check([&] { return cross_entropy(softmax(logits, 1), targets); }, {logits}).max_relative_error, 1e-5);
}

TEST(CrossEntropyTest, FusedGradientIsSoftmaxMinusOneHotOverBatch) {
  Rng rng(2);
  Tensor logits = random_tensor({3, 4}, rng, true);
  const std::vector<std::size_t> targets = {2, 0, 1};
  Tape tape;
  tape.backward(softmax_cross_entropy(logits, targets));
  Tensor p = softmax(logits.clone(), 1);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_NEAR(logits.grad()[i * 4 + c], (p[i * 4 + c] - (c == targets[i] ? 1.0 : 0.0)) / 3.0, 1e-15);
    }
  }
}

// Runs the optimizer on a scalar w with gradient g(w).
template <class Grad>
std::vector<double> optimize_scalar(double w0, std::size_t steps, const OptimizerConfig& cfg, Grad g) {
  Tensor w({1}, {w0}, true);
  std::vector<Tensor> params = {w};
  MomentState state;
  std::vector<double> path = {w0};
  for (std::size_t i = 0; i < steps; ++i) {
    w.zero_grad();
    w.mutable_grad()[0] = g(w[0]);
    EXPECT_TRUE(nadam_step(params, state, cfg));
    path.push_back(w[0]);
  }
  return path;
}

TEST(NadamTest, ZeroGradientLeavesParametersUnchanged) {
  Rng rng(3);
  Tensor w = random_tensor({4, 3}, rng, true);
  const auto before = w.values();
  std::vector<Tensor> params = {w};
  MomentState state;
  for (int i = 0; i < 10; ++i) {
    w.zero_grad();
    nadam_step(params, state, {});
  }
  EXPECT_EQ(w.values(), before);
}

TEST(NadamTest, ConstantGradientDecreasesMonotonically) {
  OptimizerConfig cfg;
  cfg.learning_rate = 1e-3;
  const auto path = optimize_scalar(1.0, 100, cfg, [](double) { return 1.0; });
  for (std::size_t i = 1; i < path.size(); ++i) EXPECT_LT(path[i], path[i - 1]);
  // Independent recurrence (Python, double precision).
  EXPECT_NEAR(path.back(), 0.8991000033995836, 1e-12);
}

TEST(NadamTest, QuadraticMatchesIndependentRecurrence) {
  OptimizerConfig cfg;
  cfg.learning_rate = 1e-3;
  const auto path = optimize_scalar(1.0, 3, cfg, [](double w) { return 2.0 * w; });
  EXPECT_NEAR(path[1], 0.9985263157968421, 1e-14);
  EXPECT_NEAR(path[2], 0.9973694161773794, 1e-14);
  EXPECT_NEAR(path[3], 0.9962917262320962, 1e-14);
}

TEST(NadamTest, QuadraticAtReferenceRateTravelsAboutOneStepPerIteration) {
  // At lr 1e-4 the step size is ~lr, so 2000 steps cover ~0.2 of the unit
  // distance to the minimum; the recurrence lands at 0.8080485...
  OptimizerConfig cfg;
  const auto path = optimize_scalar(1.0, 2000, cfg, [](double w) { return 2.0 * w; });
  EXPECT_NEAR(path.back(), 0.8080485062584153, 1e-9);
}

TEST(NadamTest, QuadraticConvergesAtLargerRate) {
  OptimizerConfig cfg;
  cfg.learning_rate = 1e-2;
  const auto path = optimize_scalar(1.0, 2000, cfg, [](double w) { return 2.0 * w; });
  EXPECT_LT(std::abs(path.back()), 1e-2);
}

TEST(NadamTest, NonFiniteGradientRejectedWithoutSideEffects) {
  Tensor a({2}, {1.0, 2.0}, true), b({1}, {3.0}, true);
  std::vector<Tensor> params = {a, b};
  MomentState state;
  a.zero_grad();
  b.zero_grad();
  a.mutable_grad()[0] = 0.5;
  ASSERT_TRUE(nadam_step(params, state, {}));
  const auto a_before = a.values();
  const auto m_before = state.m;
  const std::size_t step_before = state.step;
  b.mutable_grad()[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(nadam_step(params, state, {}));
  EXPECT_EQ(a.values(), a_before);
  EXPECT_EQ(state.m, m_before);
  EXPECT_EQ(state.step, step_before);
}

TEST(NadamTest, PlainAdamFallbackDiffers) {
  OptimizerConfig nadam, adam;
  adam.kind = OptimizerKind::adam;
  nadam.learning_rate = adam.learning_rate = 1e-3;
  auto g = [](double w) { return 2.0 * w; };
  const auto a = optimize_scalar(1.0, 5, nadam, g), b = optimize_scalar(1.0, 5, adam, g);
  // Adam's first step is exactly lr (bias-corrected m/sqrt(v) = sign(g)).
  EXPECT_NEAR(b[1], 1.0 - 1e-3, 1e-10);
  EXPECT_NE(a[5], b[5]);
}

TEST(ClipTest, GlobalNormIsCappedAndDirectionKept) {
  Tensor a({2}, {0, 0}, true), b({1}, {0}, true);
  a.mutable_grad()[0] = 3.0;
  a.mutable_grad()[1] = 4.0;
  b.mutable_grad()[0] = 12.0;
  std::vector<Tensor> params = {a, b};
  EXPECT_DOUBLE_EQ(clip_gradients(params, 5.0), 13.0);
  EXPECT_NEAR(gradient_norm(params), 5.0, 1e-12);
  EXPECT_NEAR(a.grad()[1] / a.grad()[0], 4.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(clip_gradients(params, 0.0), gradient_norm(params));
}

std::vector<std::vector<double>> rows(std::size_t n, std::size_t d, Rng& rng) {
  std::vector<std::vector<double>> out(n, std::vector<double>(d));
  for (auto& r : out) {
    for (double& v : r) v = rng.uniform(-1, 1);
  }
  return out;
}

TEST(ProjectionTest, TargetFromBatchSum) {
  // 40 inputs whose sum has L1 norm 10.
  std::vector<std::vector<double>> batch(40, {0.125, -0.125});
  EXPECT_DOUBLE_EQ(equi_output_target(batch, 4), 1.0);
  Tensor w({2, 4}, {0.5, 2, 1, 0.25, -0.5, -2, 0, -0.75});
  const auto r = equi_output_projection(w, batch);
  EXPECT_TRUE(r.applied);
  EXPECT_EQ(w.values(), (std::vector<double>{0.5, 0.5, 1, 0.25, -0.5, -0.5, 0, -0.75}));
}

TEST(ProjectionTest, RandomColumnsReachTargetAndKeepDirection) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor w = random_tensor({8, 4}, rng);
    const Tensor before = w.clone();
    const auto batch = rows(40, 8, rng);
    const auto r = equi_output_projection(w, batch);
    const auto norms = column_l1_norms(w), old = column_l1_norms(before);
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_NEAR(norms[c], r.tau, 1e-12);
      for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(w[j * 4 + c] / norms[c], before[j * 4 + c] / old[c], 1e-12);
    }
  }
}

TEST(ProjectionTest, EqualNormsScaleLogitsByOnePositiveFactor) {
  Rng rng(5);
  Tensor w = random_tensor({6, 4}, rng);
  const auto norms = column_l1_norms(w);
  for (std::size_t j = 0; j < 6; ++j) {
    for (std::size_t c = 0; c < 4; ++c) w.mutable_data()[j * 4 + c] /= norms[c];
  }
  Tensor x = random_tensor({3, 6}, rng);
  const Tensor before = matmul(x, w);
  equi_output_projection(w, rows(10, 6, rng));
  const Tensor after = matmul(x, w);
  const double k = after[0] / before[0];
  EXPECT_GT(k, 0.0);
  for (std::size_t i = 0; i < after.size(); ++i) EXPECT_NEAR(after[i], k * before[i], 1e-12);
}

TEST(ProjectionTest, DegenerateInputsAreIncidentsNotErrors) {
  Tensor w({2, 3}, {1, 0, 2, 1, 0, -1});
  auto skipped = equi_output_projection(w, {{1.0, -1.0}, {-1.0, 1.0}});
  EXPECT_FALSE(skipped.applied);
  EXPECT_EQ(skipped.incidents(), 1u);
  EXPECT_EQ(w.values(), (std::vector<double>{1, 0, 2, 1, 0, -1}));
  auto zero_column = equi_output_projection(w, {{1.0, 0.0}});
  EXPECT_TRUE(zero_column.applied);
  EXPECT_EQ(zero_column.zero_columns, 1u);
  EXPECT_EQ(w[1], 0.0);
  EXPECT_EQ(w[4], 0.0);
}

TEST(ProjectionTest, InGraphConstraintMatchesProjectionAndGradients) {
  Rng rng(6);
  Tensor w = random_tensor({5, 4}, rng, true), x = random_tensor({7, 5}, rng, true);
  Tensor projected = w.clone();
  std::vector<std::vector<double>> batch;
  for (std::size_t i = 0; i < 7; ++i) batch.emplace_back(x.data().begin() + i * 5, x.data().begin() + (i + 1) * 5);
  equi_output_projection(projected, batch);
  const Tensor eff = equi_output_weight(w, x);
  for (std::size_t k = 0; k < w.size(); ++k) EXPECT_NEAR(eff[k], projected[k], 1e-14);
  auto report = grad_check(
      [&] { return softmax_cross_entropy(matmul(x, equi_output_weight(w, x)), {0, 1, 2, 3, 0, 1, 2}); }, {w, x});
  EXPECT_LT(report.max_relative_error, 1e-6);
}

TEST(SamplerTest, EqualClassesGiveUniformBatches) {
  std::vector<std::size_t> labels;
  for (std::size_t c = 0; c < 4; ++c) labels.insert(labels.end(), 100, c);
  Rng rng(7);
  auto plan = balanced_batches(labels, default_emotions(), 10, rng);
  ASSERT_EQ(plan.size(), 10u);
  std::set<std::size_t> seen;
  for (std::size_t b = 0; b < plan.size(); ++b) {
    EXPECT_EQ(plan.histograms[b], (std::vector<std::size_t>{10, 10, 10, 10}));
    seen.insert(plan.batches[b].begin(), plan.batches[b].end());
  }
  EXPECT_EQ(seen.size(), 400u);
}

TEST(SamplerTest, LargestClassCoveredOnceSmallerClassesRepeat) {
  std::vector<std::size_t> labels;
  labels.insert(labels.end(), 100, 0);
  for (std::size_t c = 1; c < 4; ++c) labels.insert(labels.end(), 50, c);
  Rng rng(8);
  auto plan = balanced_batches(labels, default_emotions(), 10, rng);
  ASSERT_EQ(plan.size(), 10u);
  std::vector<std::size_t> uses(labels.size(), 0);
  for (std::size_t b = 0; b < plan.size(); ++b) {
    EXPECT_EQ(plan.histograms[b], (std::vector<std::size_t>{10, 10, 10, 10}));
    for (std::size_t i : plan.batches[b]) ++uses[i];
  }
  for (std::size_t i = 0; i < labels.size(); ++i) EXPECT_EQ(uses[i], labels[i] == 0 ? 1u : 2u);
}

TEST(SamplerTest, SameSeedSamePlan) {
  std::vector<std::size_t> labels = {0, 1, 2, 3, 0, 1, 2, 3, 0, 0, 0, 1};
  Rng a(9), b(9);
  EXPECT_EQ(balanced_batches(labels, default_emotions(), 2, a).batches,
            balanced_batches(labels, default_emotions(), 2, b).batches);
}

TEST(SamplerTest, EmptyClassRejectedByName) {
  Rng rng(10);
  try {
    balanced_batches({0, 1, 3}, default_emotions(), 1, rng);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("sad"), std::string::npos);
  }
}

TEST(SamplerTest, ShuffledBatchesCoverEachSegmentOnce) {
  std::vector<std::size_t> labels(23, 0);
  Rng rng(11);
  auto plan = shuffled_batches(labels, 4, 8, rng);
  ASSERT_EQ(plan.size(), 3u);
  EXPECT_EQ(plan.batches.back().size(), 7u);
  std::set<std::size_t> seen;
  for (const auto& b : plan.batches) seen.insert(b.begin(), b.end());
  EXPECT_EQ(seen.size(), 23u);
}

TEST(TrainConfigTest, EmotionStageNeedsDivisibleBatch) {
  TrainConfig cfg;
  EXPECT_EQ(cfg.per_class(4), 10u);
  cfg.batch_size = 30;
  EXPECT_THROW(cfg.per_class(4), ConfigError);
  cfg.stage = Stage::sp;
  EXPECT_EQ(cfg.per_class(9), 3u);
}

TEST(TrainStageTest, BestEpochIsEarliestArgmax) {
  EXPECT_EQ(best_epoch({0.4, 0.7, 0.6}), 2u);
  EXPECT_EQ(best_epoch({0.5, 0.5}), 1u);
}

class ToyTraining : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { blocks_ = new std::vector<FeatureBlock>(testing::toy_blocks(4, 2, 3)); }
  static void TearDownTestSuite() { delete blocks_; }

  static std::vector<std::string> speakers() {
    return {synth_speaker_id(0), synth_speaker_id(1), synth_speaker_id(2), synth_speaker_id(3)};
  }

  static TrainConfig config(Stage stage, std::size_t epochs) {
    TrainConfig cfg;
    cfg.stage = stage;
    cfg.batch_size = 8;
    cfg.optimizer.learning_rate = 3e-3;
    cfg.max_epochs = epochs;
    cfg.patience = epochs;
    cfg.seed = 5;
    return cfg;
  }

  static Classifier trained_speaker_tower() {
    auto sp = make_classifier(testing::toy_config(), Pooling::self_attention, 8, speakers(), 1);
    auto result = train_stage(sp, *blocks_, *blocks_, config(Stage::sp, 2));
    result.best.freeze();
    return result.best;
  }

  static std::vector<FeatureBlock>* blocks_;
};

std::vector<FeatureBlock>* ToyTraining::blocks_ = nullptr;

TEST_F(ToyTraining, SpeakerStageReachesPerfectAccuracy) {
  auto sp = make_classifier(testing::toy_config(), Pooling::self_attention, 8, speakers(), 1);
  TrainConfig cfg = config(Stage::sp, 50);
  cfg.patience = 3;
  auto result = train_stage(sp, *blocks_, *blocks_, cfg);
  EXPECT_EQ(result.best_uar, 1.0);
  EXPECT_LE(result.best_epoch, 50u);
  const auto cm = confusion(result.best, label_blocks(*blocks_, result.best, Stage::sp, nullptr), Stage::sp);
  EXPECT_EQ(accuracy(cm), 1.0);
  // Epoch-averaged loss is non-increasing after epoch 5, up to one blip.
  std::size_t increases = 0;
  for (std::size_t e = 5; e < result.log.size(); ++e) increases += result.log[e].mean_loss > result.log[e - 1].mean_loss;
  EXPECT_LE(increases, 1u);
}

TEST_F(ToyTraining, SameSeedGivesBitIdenticalParameters) {
  auto run = [] {
    auto em = make_classifier(testing::toy_config(), Pooling::self_attention, 8, default_emotions(), 2);
    TrainConfig cfg = config(Stage::em, 2);
    cfg.regularize = true;
    return encode_checkpoint(train_stage(em, *blocks_, *blocks_, cfg).best, "em", 5);
  };
  EXPECT_EQ(run(), run());
}

TEST_F(ToyTraining, EmotionStageLeavesSpeakerTowerUntouched) {
  Classifier sp = trained_speaker_tower();
  const std::string before = encode_checkpoint(sp, "sp", 1);
  auto em = make_classifier(testing::toy_config(), Pooling::speaker_attention, 8, default_emotions(), 2,
                            sp.config.encoder_dim());
  TrainConfig cfg = config(Stage::em, 2);
  cfg.regularize = true;
  train_stage(em, *blocks_, *blocks_, cfg, &sp);
  EXPECT_EQ(encode_checkpoint(sp, "sp", 1), before);
}

TEST_F(ToyTraining, UnfrozenSpeakerTowerRejected) {
  auto sp = make_classifier(testing::toy_config(), Pooling::self_attention, 8, speakers(), 1);
  auto em = make_classifier(testing::toy_config(), Pooling::speaker_attention, 8, default_emotions(), 2);
  EXPECT_THROW(train_stage(em, *blocks_, *blocks_, config(Stage::em, 1), &sp), std::logic_error);
}

TEST_F(ToyTraining, SingleSampleStepLowersThatSamplesLoss) {
  auto em = make_classifier(testing::toy_config(), Pooling::self_attention, 8, default_emotions(), 4);
  const LabeledBlocks data = label_blocks(*blocks_, em, Stage::em, nullptr);
  auto loss_of = [&](std::size_t i) {
    NoGradGuard no_grad;
    return softmax_cross_entropy(run_on(em, data, i).head.logits, {data.labels[i]}).item();
  };
  TrainConfig cfg = config(Stage::em, 1);
  cfg.optimizer.learning_rate = 1e-6;
  for (std::size_t i : {0u, 9u, 17u}) {
    const double before = loss_of(i);
    MomentState moments;
    train_step(em, data, {i}, cfg, moments);
    EXPECT_LT(loss_of(i), before);
  }
}

TEST_F(ToyTraining, ProjectionHoldsAfterEveryRegularizedStep) {
  auto em = make_classifier(testing::toy_config(), Pooling::self_attention, 8, default_emotions(), 6);
  TrainConfig cfg = config(Stage::em, 3);
  cfg.regularize = true;
  std::size_t steps = 0;
  train_stage(em, *blocks_, *blocks_, cfg, nullptr, [&](const StepInfo& s) {
    ++steps;
    ASSERT_TRUE(s.projection && s.projection->applied);
    // Recompute tau from the logged batch independently of the trainer.
    std::vector<double> total(s.classifier_inputs.front().size(), 0.0);
    for (const auto& x : s.classifier_inputs) {
      for (std::size_t j = 0; j < total.size(); ++j) total[j] += x[j];
    }
    double l1 = 0.0;
    for (double v : total) l1 += std::abs(v);
    const double tau = static_cast<double>(s.classifier_inputs.size()) / (4.0 * l1);
    for (double n : column_l1_norms(*s.classify_weight)) EXPECT_NEAR(n, tau, 1e-10);
  });
  EXPECT_EQ(steps, 12u);
}

TEST_F(ToyTraining, EpochLogHasFiveTabSeparatedFields) {
  auto em = make_classifier(testing::toy_config(), Pooling::self_attention, 8, default_emotions(), 7);
  auto result = train_stage(em, *blocks_, *blocks_, config(Stage::em, 1));
  const std::string line = format_epoch_line(result.log.at(0));
  EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 4);
  EXPECT_EQ(line.substr(0, 2), "1\t");
}

}  // namespace
}  // namespace ssacrnn
