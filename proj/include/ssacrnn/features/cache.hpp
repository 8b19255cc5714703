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
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ssacrnn/common/container.hpp"
#include "ssacrnn/common/errors.hpp"
#include "ssacrnn/features/blocks.hpp"

namespace ssacrnn {

struct ManifestEntry {
  std::filesystem::path path;
  std::string utterance_id;
  std::string speaker_id;
  std::string emotion_label;
  std::string gender;  // optional fifth column, "F" or "M"
};

/// Tab-separated: path, utterance_id, speaker_id, emotion_label[, gender].
/// Blank lines and lines starting with '#' are skipped. Relative audio paths
/// resolve against the manifest's directory.
inline std::vector<ManifestEntry> parse_manifest(std::istream& in, const std::filesystem::path& base_dir = {}) {
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (fields.size() < 4 || fields.size() > 5) {
      throw DataError("manifest line " + std::to_string(line_no) + ": expected 4 or 5 tab-separated fields, got " +
                      std::to_string(fields.size()));
    }
    for (std::size_t i = 0; i < 4; ++i) {
      if (fields[i].empty()) throw DataError("manifest line " + std::to_string(line_no) + ": empty field " + std::to_string(i + 1));
    }
    ManifestEntry e{fields[0], fields[1], fields[2], fields[3], fields.size() == 5 ? fields[4] : ""};
    if (e.path.is_relative() && !base_dir.empty()) e.path = base_dir / e.path;
    entries.push_back(std::move(e));
  }
  return entries;
}

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open manifest " + path.string());
  return parse_manifest(in, path.parent_path());
}

inline std::string format_manifest(const std::vector<ManifestEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    out += e.path.generic_string() + '\t' + e.utterance_id + '\t' + e.speaker_id + '\t' + e.emotion_label;
    if (!e.gender.empty()) out += '\t' + e.gender;
    out += '\n';
  }
  return out;
}

inline Json framing_json(const FramingOptions& o) {
  return Json{{"segment_seconds", o.segment_seconds}, {"window_ms", o.window_ms}, {"hop_ms", o.hop_ms},
              {"n_mels", o.n_mels},         {"frames", o.frames},       {"log_floor", o.log_floor},
              {"delta_width", o.delta_width}, {"window", "hann"},       {"mel_scale", "htk"}};
}

inline std::string safe_file_stem(const std::string& id) {
  std::string s = id;
  for (char& c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  }
  return s;
}

inline std::filesystem::path block_path(const std::filesystem::path& cache_dir, const std::string& utterance_id,
                                        std::size_t segment_index) {
  std::ostringstream name;
  name << safe_file_stem(utterance_id) << "__" << std::setw(3) << std::setfill('0') << segment_index << ".feat";
  return cache_dir / name.str();
}

inline std::string encode_block(const FeatureBlock& b, const FramingOptions& framing, const std::string& source_hash) {
  Json header{{"format", "ssacrnn-features"},
              {"version", 1},
              {"shape", b.data.shape()},
              {"speaker_id", b.speaker_id},
              {"emotion_label", b.emotion_label},
              {"utterance_id", b.utterance_id},
              {"segment_index", b.segment_index},
              {"framing", framing_json(framing)},
              {"source_hash", source_hash}};
  std::vector<float> payload(b.data.data().begin(), b.data.data().end());
  return encode_container(std::move(header), payload);
}

inline FeatureBlock decode_block(const Container& c, const std::string& what) {
  if (c.header.value("format", "") != "ssacrnn-features") throw DataError(what + ": not a feature block");
  const Shape shape = c.header.at("shape").get<Shape>();
  if (element_count(shape) != c.payload.size()) throw DataError(what + ": shape does not match payload");
  FeatureBlock b;
  b.data = Tensor(shape, std::vector<double>(c.payload.begin(), c.payload.end()));
  b.speaker_id = c.header.at("speaker_id").get<std::string>();
  b.emotion_label = c.header.at("emotion_label").get<std::string>();
  b.utterance_id = c.header.at("utterance_id").get<std::string>();
  b.segment_index = c.header.at("segment_index").get<std::size_t>();
  return b;
}

inline FeatureBlock read_block(const std::filesystem::path& path) {
  return decode_block(read_container(path), path.string());
}

/// Every block in a cache directory, ordered by file name.
inline std::vector<FeatureBlock> load_cache(const std::filesystem::path& cache_dir) {
  if (!std::filesystem::is_directory(cache_dir)) {
    throw MissingArtifactError("feature cache " + cache_dir.string() + " does not exist; run `ssacrnn features` first");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(cache_dir)) {
    if (entry.path().extension() == ".feat") files.push_back(entry.path());
  }
  if (files.empty()) {
    throw MissingArtifactError("feature cache " + cache_dir.string() + " is empty; run `ssacrnn features` first");
  }
  std::sort(files.begin(), files.end());
  std::vector<FeatureBlock> blocks;
  blocks.reserve(files.size());
  for (const auto& f : files) blocks.push_back(read_block(f));
  return blocks;
}

}  // namespace ssacrnn
