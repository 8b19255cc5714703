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
#include <cstdint>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ssacrnn/common/errors.hpp"
#include "ssacrnn/numerics/random.hpp"

namespace ssacrnn {

enum class Layout { iemocap_like, atthack_like, synthetic };
enum class Mode { loso, speaker_dependent };

inline std::string to_string(Layout l) {
  switch (l) {
    case Layout::iemocap_like: return "iemocap-like";
    case Layout::atthack_like: return "atthack-like";
    case Layout::synthetic: return "synthetic";
  }
  return "";
}

inline Layout layout_from_string(const std::string& s) {
  if (s == "iemocap-like") return Layout::iemocap_like;
  if (s == "atthack-like") return Layout::atthack_like;
  if (s == "synthetic") return Layout::synthetic;
  throw ConfigError("unknown dataset layout '" + s + "' (expected iemocap-like, atthack-like or synthetic)");
}

inline std::string to_string(Mode m) { return m == Mode::loso ? "loso" : "speaker_dependent"; }

inline Mode mode_from_string(const std::string& s) {
  if (s == "loso") return Mode::loso;
  if (s == "speaker_dependent") return Mode::speaker_dependent;
  throw ConfigError("unknown mode '" + s + "' (expected loso or speaker_dependent)");
}

struct Speaker {
  std::string id;
  char gender = '?';  // 'F', 'M' or '?'
};

struct FoldPlan {
  std::size_t index = 0;  // 1-based
  std::vector<std::string> train_speakers;
  std::vector<std::string> valid_speakers;
  // Speakers the speaker classifier must never see. Equals valid_speakers
  // under LOSO and is empty in speaker-dependent mode.
  std::vector<std::string> sp_excluded_speakers;

  bool is_excluded(const std::string& speaker) const {
    return std::find(sp_excluded_speakers.begin(), sp_excluded_speakers.end(), speaker) !=
           sp_excluded_speakers.end();
  }
};

namespace detail {

inline std::vector<FoldPlan> folds_from_groups(const std::vector<Speaker>& speakers,
                                               const std::vector<std::vector<std::string>>& groups, Mode mode) {
  std::vector<FoldPlan> plans;
  for (std::size_t f = 0; f < groups.size(); ++f) {
    FoldPlan p;
    p.index = f + 1;
    p.valid_speakers = groups[f];
    std::sort(p.valid_speakers.begin(), p.valid_speakers.end());
    for (const auto& s : speakers) {
      if (std::find(p.valid_speakers.begin(), p.valid_speakers.end(), s.id) == p.valid_speakers.end()) {
        p.train_speakers.push_back(s.id);
      }
    }
    std::sort(p.train_speakers.begin(), p.train_speakers.end());
    if (mode == Mode::loso) p.sp_excluded_speakers = p.valid_speakers;
    plans.push_back(std::move(p));
  }
  return plans;
}

}  // namespace detail

/// Speaker-disjoint cross-validation folds.
///
/// iemocap-like: 10 speakers, one validation speaker per fold.
/// atthack-like: 20 speakers (12 F, 8 M), two per fold; 8 folds pair one
/// woman with one man and the remaining 2 pair two women.
/// synthetic: any number of speakers dealt round-robin into `n_folds` folds.
/// Assignment is shuffled by `seed`.
inline std::vector<FoldPlan> plan_folds(std::vector<Speaker> speakers, Layout layout, Mode mode, std::uint64_t seed,
                                        std::size_t n_folds = 2) {
  std::set<std::string> unique;
  for (const auto& s : speakers) {
    if (!unique.insert(s.id).second) throw DataError("duplicate speaker '" + s.id + "'");
  }
  std::sort(speakers.begin(), speakers.end(), [](const Speaker& a, const Speaker& b) { return a.id < b.id; });
  Rng rng(seed);
  std::vector<std::vector<std::string>> groups;
  switch (layout) {
    case Layout::iemocap_like: {
      if (speakers.size() != 10) {
        throw DataError("iemocap-like layout needs 10 speakers, got " + std::to_string(speakers.size()));
      }
      std::vector<std::string> ids;
      for (const auto& s : speakers) ids.push_back(s.id);
      rng.shuffle(ids);
      for (const auto& id : ids) groups.push_back({id});
      break;
    }
    case Layout::atthack_like: {
      std::vector<std::string> women, men;
      for (const auto& s : speakers) {
        if (s.gender == 'F') {
          women.push_back(s.id);
        } else if (s.gender == 'M') {
          men.push_back(s.id);
        } else {
          throw DataError("atthack-like layout needs a gender for speaker '" + s.id + "'");
        }
      }
      if (women.size() != 12 || men.size() != 8) {
        throw DataError("atthack-like layout needs 12 female and 8 male speakers, got " +
                        std::to_string(women.size()) + " and " + std::to_string(men.size()));
      }
      rng.shuffle(women);
      rng.shuffle(men);
      for (std::size_t i = 0; i < 8; ++i) groups.push_back({women[i], men[i]});
      groups.push_back({women[8], women[9]});
      groups.push_back({women[10], women[11]});
      rng.shuffle(groups);
      break;
    }
    case Layout::synthetic: {
      if (n_folds < 2 || speakers.size() < n_folds) {
        throw DataError("synthetic layout needs at least 2 folds and one speaker per fold");
      }
      std::vector<std::string> ids;
      for (const auto& s : speakers) ids.push_back(s.id);
      rng.shuffle(ids);
      groups.assign(n_folds, {});
      for (std::size_t i = 0; i < ids.size(); ++i) groups[i % n_folds].push_back(ids[i]);
      break;
    }
  }
  return detail::folds_from_groups(speakers, groups, mode);
}

/// One line per fold: index, validation speakers, sp-excluded speakers,
/// training speakers.
inline std::string format_fold_plans(const std::vector<FoldPlan>& plans) {
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
    return s.empty() ? std::string("-") : s;
  };
  std::ostringstream out;
  for (const auto& p : plans) {
    out << "fold " << p.index << "\tvalid=" << join(p.valid_speakers) << "\tsp_excluded=" << join(p.sp_excluded_speakers)
        << "\ttrain=" << join(p.train_speakers) << '\n';
  }
  return out.str();
}

}  // namespace ssacrnn
