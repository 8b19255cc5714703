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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ssacrnn/common/container.hpp"
#include "ssacrnn/common/errors.hpp"
#include "ssacrnn/model/classifier.hpp"

namespace ssacrnn {

inline Json to_json(const CrnnConfig& c) {
  return Json{{"conv_channels", c.conv_channels}, {"kernel_time", c.kernel_time},
              {"kernel_freq", c.kernel_freq},     {"linear_units", c.linear_units},
              {"lstm_cells", c.lstm_cells},       {"input_channels", c.input_channels},
              {"n_mels", c.n_mels},               {"leaky_slope", c.leaky_slope}};
}

inline CrnnConfig crnn_config_from_json(const Json& j) {
  CrnnConfig c;
  c.conv_channels = j.at("conv_channels").get<std::vector<std::size_t>>();
  c.kernel_time = j.at("kernel_time").get<std::size_t>();
  c.kernel_freq = j.at("kernel_freq").get<std::size_t>();
  c.linear_units = j.at("linear_units").get<std::size_t>();
  c.lstm_cells = j.at("lstm_cells").get<std::size_t>();
  c.input_channels = j.at("input_channels").get<std::size_t>();
  c.n_mels = j.at("n_mels").get<std::size_t>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  return c;
}

/// Serialized classifier: header with config, parameter registry (names and
/// shapes in payload order), seed, stage tag and caller-supplied metadata,
/// then every parameter as float32.
inline std::string encode_checkpoint(const Classifier& c, const std::string& stage, std::uint64_t seed,
                                     const Json& extra = Json::object()) {
  if (stage != "sp" && stage != "em") throw std::invalid_argument("checkpoint stage must be 'sp' or 'em'");
  Json registry = Json::array();
  std::vector<float> payload;
  for (const auto& p : c.parameters()) {
    registry.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
    for (double v : p.tensor.data()) payload.push_back(static_cast<float>(v));
  }
  Json header{{"format", "ssacrnn-checkpoint"},
              {"version", 1},
              {"stage", stage},
              {"seed", seed},
              {"config", to_json(c.config)},
              {"pooling", to_string(c.pooling)},
              {"embedding_size", c.embedding_size},
              {"classes", c.classes},
              {"frozen", c.frozen},
              {"parameters", registry},
              {"meta", extra}};
  return encode_container(std::move(header), payload);
}

inline void save_checkpoint(const std::filesystem::path& path, const Classifier& c, const std::string& stage,
                            std::uint64_t seed, const Json& extra = Json::object()) {
  write_file_atomic(path, encode_checkpoint(c, stage, seed, extra));
}

struct LoadedCheckpoint {
  Classifier classifier;
  Json header;
};

inline LoadedCheckpoint decode_checkpoint(const Container& box, const std::string& what) {
  const Json& h = box.header;
  if (h.value("format", "") != "ssacrnn-checkpoint") throw DataError(what + ": not a checkpoint");
  const CrnnConfig cfg = crnn_config_from_json(h.at("config"));
  const Pooling pooling = pooling_from_string(h.at("pooling").get<std::string>());
  const auto classes = h.at("classes").get<std::vector<std::string>>();
  const std::size_t emb = h.at("embedding_size").get<std::size_t>();
  std::size_t speaker_width = 0;
  for (const auto& entry : h.at("parameters")) {
    if (entry.at("name") == "ssa.w_key_sp") speaker_width = entry.at("shape").at(0).get<std::size_t>();
  }
  Classifier c = make_classifier(cfg, pooling, emb, classes, 0, speaker_width);
  auto params = c.parameters();
  const auto& registry = h.at("parameters");
  if (registry.size() != params.size()) throw DataError(what + ": parameter registry does not match config");
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (registry[i].at("name") != params[i].name ||
        registry[i].at("shape").get<Shape>() != params[i].tensor.shape()) {
      throw DataError(what + ": parameter " + params[i].name + " does not match registry entry " +
                      registry[i].dump());
    }
    auto dst = params[i].tensor.mutable_data();
    if (offset + dst.size() > box.payload.size()) throw DataError(what + ": payload too short");
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = box.payload[offset + k];
    offset += dst.size();
  }
  if (offset != box.payload.size()) throw DataError(what + ": payload has trailing values");
  if (h.value("frozen", false)) c.freeze();
  return {std::move(c), h};
}

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifactError("checkpoint " + path.string() + " does not exist");
  return decode_checkpoint(read_container(path), path.string());
}

}  // namespace ssacrnn
