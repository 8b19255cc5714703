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

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ssacrnn/common/errors.hpp"
#include "ssacrnn/evaluation/folds.hpp"
#include "ssacrnn/model/encoder.hpp"
#include "ssacrnn/training/trainer.hpp"

namespace ssacrnn {

enum class Variant { acrnn, acrnn_r, ssa_crnn_r };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::acrnn: return "acrnn";
    case Variant::acrnn_r: return "acrnn-r";
    case Variant::ssa_crnn_r: return "ssa-crnn-r";
  }
  return "";
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "acrnn") return Variant::acrnn;
  if (s == "acrnn-r") return Variant::acrnn_r;
  if (s == "ssa-crnn-r") return Variant::ssa_crnn_r;
  throw ConfigError("unknown variant '" + s + "' (expected acrnn, acrnn-r or ssa-crnn-r)");
}

/// Environment variable that, when set, replaces the configured cache_dir.
inline constexpr const char* kCacheRootEnv = "SSACRNN_CACHE_DIR";

inline constexpr int kConfigVersion = 1;

/// Everything a run depends on. Serialized as a flat "key = value" text file
/// whose canonical form lists every key in a fixed order.
struct RunConfig {
  std::filesystem::path manifest = "manifest.tsv";
  std::filesystem::path cache_dir = "cache";
  std::filesystem::path output_dir = "runs";
  Layout layout = Layout::synthetic;
  Mode mode = Mode::loso;
  bool mode_declared = false;  // set when the input names a mode explicitly
  Variant variant = Variant::ssa_crnn_r;
  std::size_t folds = 2;  // synthetic layout only
  std::uint64_t seed = 0;

  CrnnConfig model;
  std::size_t sp_embedding = 64;
  std::size_t em_embedding = 128;

  std::size_t batch_size = 40;
  OptimizerConfig optimizer;
  std::size_t max_epochs = 300;
  std::size_t patience = 30;
  double clip_norm = 5.0;
  bool balanced = true;
  bool regularize_sp = false;
  std::size_t sp_holdout_every = 5;  // every k-th utterance of a C_sp speaker validates C_sp

  bool regularize_em() const { return variant != Variant::acrnn; }
  bool uses_speaker_tower() const { return variant == Variant::ssa_crnn_r; }

  std::size_t fold_count() const {
    switch (layout) {
      case Layout::iemocap_like:
      case Layout::atthack_like: return 10;
      case Layout::synthetic: return folds;
    }
    return folds;
  }

  TrainConfig train_config(Stage stage) const {
    TrainConfig t;
    t.batch_size = batch_size;
    t.optimizer = optimizer;
    t.max_epochs = max_epochs;
    t.patience = patience;
    t.seed = seed;
    t.clip_norm = clip_norm;
    t.balanced = balanced;
    t.stage = stage;
    t.regularize = stage == Stage::sp ? regularize_sp : regularize_em();
    return t;
  }

  void validate() const {
    if (variant == Variant::ssa_crnn_r && !mode_declared) {
      throw ConfigError("variant ssa-crnn-r requires an explicit mode (loso or speaker_dependent)");
    }
    if (variant == Variant::acrnn && regularize_sp) {
      throw ConfigError("variant acrnn has no regularization and no speaker tower; remove regularize_sp");
    }
    if (batch_size == 0 || max_epochs == 0 || sp_embedding == 0 || em_embedding == 0 || sp_holdout_every < 2) {
      throw ConfigError("batch_size, max_epochs and embedding sizes must be positive and sp_holdout_every >= 2");
    }
    if (!(optimizer.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (layout == Layout::synthetic && folds < 2) throw ConfigError("folds must be at least 2");
    try {
      model.validate();
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || end != value.data() + value.size()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + value + "'");
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

struct ConfigKey {
  const char* name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

inline const std::vector<ConfigKey>& config_keys() {
  using K = ConfigKey;
  auto size_key = [](const char* name, std::size_t RunConfig::*field) {
    return K{name, [field](const RunConfig& c) { return std::to_string(c.*field); },
             [name, field](RunConfig& c, const std::string& v) { c.*field = parse_number<std::size_t>(name, v); }};
  };
  auto double_key = [](const char* name, double OptimizerConfig::*field) {
    return K{name, [field](const RunConfig& c) { return format_double(c.optimizer.*field); },
             [name, field](RunConfig& c, const std::string& v) { c.optimizer.*field = parse_number<double>(name, v); }};
  };
  auto model_size = [](const char* name, std::size_t CrnnConfig::*field) {
    return K{name, [field](const RunConfig& c) { return std::to_string(c.model.*field); },
             [name, field](RunConfig& c, const std::string& v) { c.model.*field = parse_number<std::size_t>(name, v); }};
  };
  static const std::vector<K> keys = {
      {"manifest", [](const RunConfig& c) { return c.manifest.generic_string(); },
       [](RunConfig& c, const std::string& v) { c.manifest = v; }},
      {"cache_dir", [](const RunConfig& c) { return c.cache_dir.generic_string(); },
       [](RunConfig& c, const std::string& v) { c.cache_dir = v; }},
      {"output_dir", [](const RunConfig& c) { return c.output_dir.generic_string(); },
       [](RunConfig& c, const std::string& v) { c.output_dir = v; }},
      {"layout", [](const RunConfig& c) { return to_string(c.layout); },
       [](RunConfig& c, const std::string& v) { c.layout = layout_from_string(v); }},
      {"mode", [](const RunConfig& c) { return to_string(c.mode); },
       [](RunConfig& c, const std::string& v) {
         c.mode = mode_from_string(v);
         c.mode_declared = true;
       }},
      {"variant", [](const RunConfig& c) { return to_string(c.variant); },
       [](RunConfig& c, const std::string& v) { c.variant = variant_from_string(v); }},
      size_key("folds", &RunConfig::folds),
      {"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
       [](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); }},
      {"conv_channels",
       [](const RunConfig& c) {
         std::string s;
         for (auto ch : c.model.conv_channels) s += (s.empty() ? "" : ",") + std::to_string(ch);
         return s;
       },
       [](RunConfig& c, const std::string& v) {
         c.model.conv_channels.clear();
         std::stringstream ss(v);
         std::string item;
         while (std::getline(ss, item, ',')) c.model.conv_channels.push_back(parse_number<std::size_t>("conv_channels", trim(item)));
       }},
      model_size("kernel_time", &CrnnConfig::kernel_time),
      model_size("kernel_freq", &CrnnConfig::kernel_freq),
      model_size("linear_units", &CrnnConfig::linear_units),
      model_size("lstm_cells", &CrnnConfig::lstm_cells),
      {"leaky_slope", [](const RunConfig& c) { return format_double(c.model.leaky_slope); },
       [](RunConfig& c, const std::string& v) { c.model.leaky_slope = parse_number<double>("leaky_slope", v); }},
      size_key("sp_embedding", &RunConfig::sp_embedding),
      size_key("em_embedding", &RunConfig::em_embedding),
      size_key("batch_size", &RunConfig::batch_size),
      {"optimizer", [](const RunConfig& c) { return to_string(c.optimizer.kind); },
       [](RunConfig& c, const std::string& v) {
         try {
           c.optimizer.kind = optimizer_from_string(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(e.what());
         }
       }},
      double_key("learning_rate", &OptimizerConfig::learning_rate),
      double_key("beta1", &OptimizerConfig::beta1),
      double_key("beta2", &OptimizerConfig::beta2),
      double_key("epsilon", &OptimizerConfig::epsilon),
      size_key("max_epochs", &RunConfig::max_epochs),
      size_key("patience", &RunConfig::patience),
      {"clip_norm", [](const RunConfig& c) { return format_double(c.clip_norm); },
       [](RunConfig& c, const std::string& v) { c.clip_norm = parse_number<double>("clip_norm", v); }},
      {"balanced", [](const RunConfig& c) { return std::string(c.balanced ? "true" : "false"); },
       [](RunConfig& c, const std::string& v) { c.balanced = parse_bool("balanced", v); }},
      {"regularize_sp", [](const RunConfig& c) { return std::string(c.regularize_sp ? "true" : "false"); },
       [](RunConfig& c, const std::string& v) { c.regularize_sp = parse_bool("regularize_sp", v); }},
      size_key("sp_holdout_every", &RunConfig::sp_holdout_every),
  };
  return keys;
}

inline const ConfigKey& find_key(const std::string& name) {
  for (const auto& k : config_keys()) {
    if (name == k.name) return k;
  }
  throw ConfigError("unknown config key '" + name + "'");
}

}  // namespace detail

/// Applies one "key=value" override (as given on the command line).
inline void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = detail::trim(assignment.substr(0, eq));
  if (key == "version") throw ConfigError("version cannot be overridden");
  detail::find_key(key).set(cfg, detail::trim(assignment.substr(eq + 1)));
}

/// Parses the text form. "version = 1" is required; blank lines and '#'
/// comments are ignored; unknown or repeated keys are errors. Keys that are
/// absent keep their defaults.
inline RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  bool versioned = false;
  std::stringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq)), value = detail::trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError("config line " + std::to_string(line_no) + ": repeated key '" + key + "'");
    if (key == "version") {
      if (detail::parse_number<int>("version", value) != kConfigVersion) {
        throw ConfigError("unsupported config version " + value + " (this build reads version " +
                          std::to_string(kConfigVersion) + ")");
      }
      versioned = true;
      continue;
    }
    detail::find_key(key).set(cfg, value);
  }
  if (!versioned) throw ConfigError("config is missing 'version = " + std::to_string(kConfigVersion) + "'");
  return cfg;
}

/// Canonical text: version first, then every key in a fixed order.
inline std::string format_run_config(const RunConfig& cfg) {
  std::string out = "version = " + std::to_string(kConfigVersion) + "\n";
  for (const auto& k : detail::config_keys()) out += std::string(k.name) + " = " + k.get(cfg) + "\n";
  return out;
}

/// Reads a config file, applies overrides and the cache-root environment
/// variable, resolves relative paths against the file's directory, and
/// validates the result.
inline RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  RunConfig cfg = parse_run_config(buf.str());
  for (const auto& o : overrides) apply_override(cfg, o);
  if (const char* root = std::getenv(kCacheRootEnv); root != nullptr && *root != '\0') cfg.cache_dir = root;
  const auto base = path.parent_path();
  for (auto* p : {&cfg.manifest, &cfg.cache_dir, &cfg.output_dir}) {
    if (p->is_relative() && !base.empty()) *p = base / *p;
  }
  cfg.validate();
  return cfg;
}

}  // namespace ssacrnn
