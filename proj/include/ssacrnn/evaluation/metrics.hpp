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
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "ssacrnn/common/errors.hpp"

namespace ssacrnn {

/// Counts with rows = reference class, columns = predicted class.
struct ConfusionMatrix {
  std::vector<std::string> classes;
  std::vector<std::vector<std::size_t>> counts;

  explicit ConfusionMatrix(std::vector<std::string> names = {})
      : classes(std::move(names)), counts(classes.size(), std::vector<std::size_t>(classes.size(), 0)) {}

  std::size_t size() const { return classes.size(); }

  void add(std::size_t reference, std::size_t predicted, std::size_t n = 1) {
    if (reference >= size() || predicted >= size()) throw DataError("confusion matrix index out of range");
    counts[reference][predicted] += n;
  }

  std::size_t row_total(std::size_t r) const {
    std::size_t t = 0;
    for (std::size_t v : counts[r]) t += v;
    return t;
  }

  std::size_t total() const {
    std::size_t t = 0;
    for (std::size_t r = 0; r < size(); ++r) t += row_total(r);
    return t;
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    if (o.classes != classes) throw DataError("cannot sum confusion matrices over different classes");
    for (std::size_t r = 0; r < size(); ++r) {
      for (std::size_t c = 0; c < size(); ++c) counts[r][c] += o.counts[r][c];
    }
    return *this;
  }
};

namespace detail {

inline void require_rows(const ConfusionMatrix& cm) {
  if (cm.size() == 0) throw DataError("empty confusion matrix");
  for (std::size_t r = 0; r < cm.size(); ++r) {
    if (cm.row_total(r) == 0) throw DataError("class '" + cm.classes[r] + "' is absent from the evaluation set");
  }
}

}  // namespace detail

/// Recall of each class.
inline std::vector<double> per_class_recall(const ConfusionMatrix& cm) {
  detail::require_rows(cm);
  std::vector<double> out(cm.size());
  for (std::size_t r = 0; r < cm.size(); ++r) {
    out[r] = static_cast<double>(cm.counts[r][r]) / static_cast<double>(cm.row_total(r));
  }
  return out;
}

/// Unweighted average recall: mean of the per-class recalls.
inline double uar(const ConfusionMatrix& cm) {
  double total = 0.0;
  for (double r : per_class_recall(cm)) total += r;
  return total / static_cast<double>(cm.size());
}

inline double accuracy(const ConfusionMatrix& cm) {
  std::size_t hit = 0;
  for (std::size_t r = 0; r < cm.size(); ++r) hit += cm.counts[r][r];
  return static_cast<double>(hit) / static_cast<double>(cm.total());
}

/// Each row divided by its total.
inline std::vector<std::vector<double>> normalized_cm(const ConfusionMatrix& cm) {
  detail::require_rows(cm);
  std::vector<std::vector<double>> out(cm.size(), std::vector<double>(cm.size()));
  for (std::size_t r = 0; r < cm.size(); ++r) {
    const double t = static_cast<double>(cm.row_total(r));
    for (std::size_t c = 0; c < cm.size(); ++c) out[r][c] = static_cast<double>(cm.counts[r][c]) / t;
  }
  return out;
}

inline std::string confusion_csv(const ConfusionMatrix& cm) {
  std::ostringstream s;
  s << "reference";
  for (const auto& c : cm.classes) s << ',' << c;
  s << '\n';
  for (std::size_t r = 0; r < cm.size(); ++r) {
    s << cm.classes[r];
    for (std::size_t v : cm.counts[r]) s << ',' << v;
    s << '\n';
  }
  return s.str();
}

inline std::string normalized_csv(const ConfusionMatrix& cm) {
  const auto n = normalized_cm(cm);
  std::ostringstream s;
  s << "reference";
  for (const auto& c : cm.classes) s << ',' << c;
  s << '\n';
  char buf[32];
  for (std::size_t r = 0; r < cm.size(); ++r) {
    s << cm.classes[r];
    for (double v : n[r]) {
      std::snprintf(buf, sizeof buf, "%.6f", v);
      s << ',' << buf;
    }
    s << '\n';
  }
  return s.str();
}

/// Mean of per-fold scores with a normal-approximation 95% interval,
/// half-width 1.96 * s / sqrt(k) using the sample standard deviation.
struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;
  double half_width = 0.0;
  std::size_t folds = 0;
  bool has_interval = false;
};

inline Aggregate aggregate(const std::vector<double>& scores) {
  if (scores.empty()) throw DataError("aggregate needs at least one fold score");
  Aggregate a;
  a.folds = scores.size();
  for (double s : scores) a.mean += s;
  a.mean /= static_cast<double>(a.folds);
  if (a.folds < 2) return a;
  // Deviations from the first score keep identical inputs at exactly zero.
  double shift = 0.0, shift2 = 0.0;
  for (double s : scores) {
    shift += s - scores.front();
    shift2 += (s - scores.front()) * (s - scores.front());
  }
  const double ss = std::max(0.0, shift2 - shift * shift / static_cast<double>(a.folds));
  a.stddev = std::sqrt(ss / static_cast<double>(a.folds - 1));
  a.half_width = 1.96 * a.stddev / std::sqrt(static_cast<double>(a.folds));
  a.has_interval = true;
  return a;
}

/// Percent with two decimals, e.g. "96.12 ± 4.27" (mean only below 2 folds).
inline std::string format_aggregate(const Aggregate& a) {
  char buf[64];
  if (a.has_interval) {
    std::snprintf(buf, sizeof buf, "%.2f ± %.2f", 100.0 * a.mean, 100.0 * a.half_width);
  } else {
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * a.mean);
  }
  return buf;
}

}  // namespace ssacrnn
