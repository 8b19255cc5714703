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

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssacrnn/common/errors.hpp"
#include "ssacrnn/evaluation/metrics.hpp"
#include "ssacrnn/features/blocks.hpp"
#include "ssacrnn/model/classifier.hpp"
#include "ssacrnn/model/predict.hpp"
#include "ssacrnn/training/loss.hpp"
#include "ssacrnn/training/optimizer.hpp"
#include "ssacrnn/training/regularizer.hpp"
#include "ssacrnn/training/sampler.hpp"

namespace ssacrnn {

enum class Stage { sp, em };

inline std::string to_string(Stage s) { return s == Stage::sp ? "sp" : "em"; }

inline Stage stage_from_string(const std::string& s) {
  if (s == "sp") return Stage::sp;
  if (s == "em") return Stage::em;
  throw std::invalid_argument("unknown stage '" + s + "' (expected sp or em)");
}

struct TrainConfig {
  std::size_t batch_size = 40;
  OptimizerConfig optimizer;
  std::size_t max_epochs = 300;
  std::size_t patience = 30;  // epochs without a better validation UAR
  std::uint64_t seed = 0;
  bool regularize = false;
  bool balanced = true;
  double clip_norm = 5.0;  // <= 0 disables
  Stage stage = Stage::em;

  /// Segments per class in a balanced batch. The emotion stage needs an
  /// exact split; the speaker stage rounds down, since speaker counts rarely
  /// divide the batch.
  std::size_t per_class(std::size_t n_classes) const {
    if (stage == Stage::em && batch_size % n_classes != 0) {
      throw ConfigError("batch_size " + std::to_string(batch_size) + " is not divisible by " +
                        std::to_string(n_classes) + " classes");
    }
    return std::max<std::size_t>(1, batch_size / n_classes);
  }
};

/// What one optimizer step saw and did; handed to the step observer.
struct StepInfo {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
  double gradient_norm = 0.0;
  bool accepted = true;  // false when a non-finite gradient was rejected
  std::optional<ProjectionResult> projection;
  std::vector<std::vector<double>> classifier_inputs;  // embeddings fed to the classification layer
  const Tensor* classify_weight = nullptr;               // after the step; valid during the callback
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double valid_uar = 0.0;
  double wall_seconds = 0.0;
  std::size_t incidents = 0;
};

/// Tab-separated: epoch, mean loss, validation UAR, wall time, incidents.
inline std::string format_epoch_line(const EpochRecord& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu\t%.6f\t%.6f\t%.3f\t%zu", r.epoch, r.mean_loss, r.valid_uar, r.wall_seconds,
                r.incidents);
  return buf;
}

struct TrainResult {
  Classifier best;
  std::size_t best_epoch = 0;
  double best_uar = -1.0;
  std::vector<EpochRecord> log;
};

using StepObserver = std::function<void(const StepInfo&)>;
using EpochObserver = std::function<void(const EpochRecord&)>;

/// A labelled view of feature blocks for one classifier: the label of each
/// block is its speaker (speaker stage) or emotion (emotion stage), mapped to
/// an index into the classifier's classes.
struct LabeledBlocks {
  const std::vector<FeatureBlock>* blocks = nullptr;
  std::vector<std::size_t> labels;
  std::vector<EncoderState> speaker;  // per block, speaker attention only
};

inline std::size_t index_of(const std::vector<std::string>& classes, const std::string& label) {
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == label) return i;
  }
  throw DataError("label '" + label + "' is not one of the classifier's classes");
}

inline LabeledBlocks label_blocks(const std::vector<FeatureBlock>& blocks, const Classifier& model, Stage stage,
                                  const Classifier* speaker) {
  LabeledBlocks out;
  out.blocks = &blocks;
  for (const auto& b : blocks) {
    out.labels.push_back(index_of(model.classes, stage == Stage::sp ? b.speaker_id : b.emotion_label));
  }
  if (model.pooling == Pooling::speaker_attention) {
    if (speaker == nullptr) throw std::logic_error("speaker attention training needs a speaker classifier");
    for (const auto& b : blocks) out.speaker.push_back(speaker_states(*speaker, b.data));
  }
  return out;
}

inline ClassifierOutput run_on(const Classifier& model, const LabeledBlocks& data, std::size_t i) {
  return run_classifier(model, (*data.blocks)[i].data, data.speaker.empty() ? nullptr : &data.speaker[i]);
}

inline std::vector<Tensor> trainable_tensors(const Classifier& model) {
  std::vector<Tensor> out;
  for (const auto& p : model.parameters()) {
    if (p.tensor.requires_grad()) out.push_back(p.tensor);
  }
  return out;
}

/// Utterance-level confusion matrix of `model` on `data`.
inline ConfusionMatrix confusion(const Classifier& model, const LabeledBlocks& data, Stage stage) {
  std::vector<SegmentPrediction> segments;
  {
    NoGradGuard no_grad;
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
      auto out = run_on(model, data, i);
      segments.push_back({out.head.posteriors.values(), out.head.embedding.values()});
    }
  }
  ConfusionMatrix cm(model.classes);
  for (const auto& u : aggregate_utterances(*data.blocks, segments, stage == Stage::sp)) {
    cm.add(index_of(model.classes, u.label), u.predicted);
  }
  return cm;
}

/// Validation UAR over the classes that occur in `data` (a fold's validation
/// set need not contain every class of the model, e.g. held-out speakers).
inline double validation_uar(const ConfusionMatrix& cm) {
  double total = 0.0;
  std::size_t present = 0;
  for (std::size_t r = 0; r < cm.size(); ++r) {
    const std::size_t n = cm.row_total(r);
    if (n == 0) continue;
    total += static_cast<double>(cm.counts[r][r]) / static_cast<double>(n);
    ++present;
  }
  if (present == 0) throw DataError("validation set is empty");
  return total / static_cast<double>(present);
}

namespace detail {

/// Accumulates gradients of the mean cross-entropy, one segment per tape.
inline double accumulate_plain(const Classifier& model, const LabeledBlocks& data,
                               const std::vector<std::size_t>& batch, std::vector<std::vector<double>>& inputs) {
  double total = 0.0;
  const double weight = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i : batch) {
    Tape tape;
    auto out = run_on(model, data, i);
    Tensor loss = softmax_cross_entropy(out.head.logits, {data.labels[i]});
    total += weight * loss.item();
    tape.backward(scale(loss, weight));
    inputs.push_back(out.head.embedding.values());
  }
  return total;
}

/// Same loss with the classification weight constrained to the batch's
/// equi-output norm inside the graph. The constraint couples the segments
/// through their summed embeddings, so the head is differentiated once on
/// the stacked batch embeddings and the resulting embedding gradients are
/// pushed back through each segment's tower separately.
inline double accumulate_constrained(const Classifier& model, const LabeledBlocks& data,
                                     const std::vector<std::size_t>& batch, std::vector<std::vector<double>>& inputs) {
  const std::size_t n = batch.size(), width = model.embedding_size;
  std::vector<double> stacked;
  {
    NoGradGuard no_grad;
    for (std::size_t i : batch) {
      inputs.push_back(run_on(model, data, i).head.embedding.values());
      stacked.insert(stacked.end(), inputs.back().begin(), inputs.back().end());
    }
  }
  Tensor embeddings({n, width}, std::move(stacked), true);
  std::vector<std::size_t> targets;
  for (std::size_t i : batch) targets.push_back(data.labels[i]);
  double loss_value = 0.0;
  {
    Tape tape;
    Tensor w = equi_output_weight(model.head.classify.weight, embeddings);
    Tensor loss = softmax_cross_entropy(add_bias(matmul(embeddings, w), model.head.classify.bias), targets);
    loss_value = loss.item();
    tape.backward(loss);
  }
  const auto upstream = embeddings.grad();
  for (std::size_t k = 0; k < n; ++k) {
    Tape tape;
    auto out = run_on(model, data, batch[k]);
    Tensor seed({1, width}, std::vector<double>(upstream.begin() + k * width, upstream.begin() + (k + 1) * width));
    tape.backward(sum(mul(out.head.embedding, seed)));
  }
  return loss_value;
}

}  // namespace detail

/// One optimizer step on the given batch: mean cross-entropy, backward,
/// clipping, update. With regularization on, the loss sees the
/// classification weight under the equi-output constraint and the stored
/// weight is projected onto it after the update, using the embeddings this
/// batch produced.
inline StepInfo train_step(Classifier& model, const LabeledBlocks& data, const std::vector<std::size_t>& batch,
                           const TrainConfig& cfg, MomentState& moments) {
  std::vector<Tensor> params = trainable_tensors(model);
  for (Tensor& p : params) p.zero_grad();
  StepInfo info;
  info.loss = cfg.regularize ? detail::accumulate_constrained(model, data, batch, info.classifier_inputs)
                             : detail::accumulate_plain(model, data, batch, info.classifier_inputs);
  info.gradient_norm = clip_gradients(params, cfg.clip_norm);
  info.accepted = nadam_step(params, moments, cfg.optimizer);
  if (cfg.regularize && info.accepted) {
    info.projection = equi_output_projection(model.head.classify.weight, info.classifier_inputs);
  }
  for (Tensor& p : params) p.clear_grad();
  return info;
}

/// Trains `model` on `train`, scoring `valid` after every epoch, and returns
/// the parameters of the epoch with the best validation UAR (earliest on
/// ties). Stops after `patience` epochs without improvement.
inline TrainResult train_stage(Classifier model, const std::vector<FeatureBlock>& train,
                               const std::vector<FeatureBlock>& valid, const TrainConfig& cfg,
                               const Classifier* speaker = nullptr, const StepObserver& on_step = {},
                               const EpochObserver& on_epoch = {}) {
  if (model.frozen) throw std::logic_error("cannot train a frozen classifier");
  if (speaker != nullptr && !speaker->frozen) {
    throw std::logic_error("the speaker classifier must be frozen before the emotion stage");
  }
  if (train.empty() || valid.empty()) throw DataError("training and validation sets must be non-empty");
  const LabeledBlocks train_set = label_blocks(train, model, cfg.stage, speaker);
  const LabeledBlocks valid_set = label_blocks(valid, model, cfg.stage, speaker);
  const std::size_t per_class = cfg.per_class(model.n_classes());

  Rng rng(cfg.seed ^ 0x6261746368ULL);
  MomentState moments;
  TrainResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const BatchPlan plan = cfg.balanced ? balanced_batches(train_set.labels, model.classes, per_class, rng)
                                        : shuffled_batches(train_set.labels, model.n_classes(), cfg.batch_size, rng);
    EpochRecord record;
    record.epoch = epoch;
    for (const auto& batch : plan.batches) {
      StepInfo info = train_step(model, train_set, batch, cfg, moments);
      info.epoch = epoch;
      info.step = ++step;
      record.mean_loss += info.loss;
      if (!info.accepted) ++record.incidents;
      if (info.projection) record.incidents += info.projection->incidents();
      if (on_step) {
        info.classify_weight = &model.head.classify.weight;
        on_step(info);
      }
    }
    record.mean_loss /= static_cast<double>(plan.size());
    record.valid_uar = validation_uar(confusion(model, valid_set, cfg.stage));
    record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(record);
    if (on_epoch) on_epoch(record);
    if (record.valid_uar > result.best_uar) {
      result.best_uar = record.valid_uar;
      result.best_epoch = epoch;
      result.best = model.clone();
    }
    if (epoch - result.best_epoch >= cfg.patience) break;
  }
  return result;
}

/// 1-based epoch with the highest UAR, earliest on ties.
inline std::size_t best_epoch(const std::vector<double>& uars) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < uars.size(); ++i) {
    if (uars[i] > uars[best]) best = i;
  }
  return uars.empty() ? 0 : best + 1;
}

}  // namespace ssacrnn
