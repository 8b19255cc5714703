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
#include <cstddef>
#include <string>
#include <vector>

#include "ssacrnn/common/errors.hpp"
#include "ssacrnn/numerics/random.hpp"

namespace ssacrnn {

struct BatchPlan {
  std::vector<std::vector<std::size_t>> batches;     // segment indices
  std::vector<std::vector<std::size_t>> histograms;  // per-batch class counts

  std::size_t size() const { return batches.size(); }
};

namespace detail {

inline std::vector<std::size_t> histogram(const std::vector<std::size_t>& batch, const std::vector<std::size_t>& labels,
                                          std::size_t classes) {
  std::vector<std::size_t> h(classes, 0);
  for (std::size_t i : batch) ++h[labels[i]];
  return h;
}

}  // namespace detail

/// One epoch of batches holding exactly `per_class` segments of every class.
///
/// The epoch is long enough to visit the largest class once. Each class is
/// drawn from back-to-back shuffles of its members, so smaller classes repeat
/// (evenly) within the epoch. Batch contents and order depend only on `rng`.
inline BatchPlan balanced_batches(const std::vector<std::size_t>& labels, const std::vector<std::string>& classes,
                                  std::size_t per_class, Rng& rng) {
  if (per_class == 0) throw ConfigError("balanced batches need at least one segment per class");
  std::vector<std::vector<std::size_t>> members(classes.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes.size()) throw DataError("segment label index out of range");
    members[labels[i]].push_back(i);
  }
  std::size_t largest = 0;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (members[c].empty()) throw DataError("class '" + classes[c] + "' has no training segments");
    largest = std::max(largest, members[c].size());
  }
  const std::size_t n_batches = (largest + per_class - 1) / per_class;

  std::vector<std::vector<std::size_t>> streams(classes.size());
  for (std::size_t c = 0; c < classes.size(); ++c) {
    while (streams[c].size() < n_batches * per_class) {
      auto order = members[c];
      rng.shuffle(order);
      streams[c].insert(streams[c].end(), order.begin(), order.end());
    }
  }
  BatchPlan plan;
  for (std::size_t b = 0; b < n_batches; ++b) {
    std::vector<std::size_t> batch;
    for (std::size_t c = 0; c < classes.size(); ++c) {
      batch.insert(batch.end(), streams[c].begin() + b * per_class, streams[c].begin() + (b + 1) * per_class);
    }
    rng.shuffle(batch);
    plan.batches.push_back(std::move(batch));
  }
  rng.shuffle(plan.batches);
  for (const auto& batch : plan.batches) plan.histograms.push_back(detail::histogram(batch, labels, classes.size()));
  return plan;
}

/// One epoch over a plain permutation of all segments, cut into batches of
/// `batch_size` (the last one may be short). Class frequencies follow the data.
inline BatchPlan shuffled_batches(const std::vector<std::size_t>& labels, std::size_t n_classes, std::size_t batch_size,
                                  Rng& rng) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> order(labels.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  BatchPlan plan;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    plan.batches.emplace_back(order.begin() + start, order.begin() + end);
    plan.histograms.push_back(detail::histogram(plan.batches.back(), labels, n_classes));
  }
  return plan;
}

}  // namespace ssacrnn
