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

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ssacrnn/common/errors.hpp"

// Self-describing file container shared by feature caches, checkpoints and
// embedding exports: one line of JSON, a newline, then little-endian float32
// payload. The header says how many floats follow.

namespace ssacrnn {

static_assert(std::endian::native == std::endian::little, "payload is written in native order");

using Json = nlohmann::json;

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline std::string file_hash(const std::filesystem::path& path) {
  return hex64(fnv1a(read_file_bytes(path)));
}

/// Writes to a sibling temp file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

struct Container {
  Json header;
  std::vector<float> payload;
};

inline std::string encode_container(Json header, const std::vector<float>& payload) {
  header["payload_floats"] = payload.size();
  std::string bytes = header.dump();
  bytes.push_back('\n');
  const std::size_t offset = bytes.size();
  bytes.resize(offset + payload.size() * sizeof(float));
  if (!payload.empty()) std::memcpy(bytes.data() + offset, payload.data(), payload.size() * sizeof(float));
  return bytes;
}

inline Container decode_container(std::string_view bytes, const std::string& what = "container") {
  const auto newline = bytes.find('\n');
  if (newline == std::string_view::npos) throw DataError(what + ": missing header line");
  Container c;
  try {
    c.header = Json::parse(bytes.substr(0, newline));
  } catch (const Json::exception& e) {
    throw DataError(what + ": bad header: " + e.what());
  }
  const std::size_t count = c.header.value("payload_floats", std::size_t{0});
  const auto body = bytes.substr(newline + 1);
  if (body.size() != count * sizeof(float)) {
    throw DataError(what + ": payload holds " + std::to_string(body.size()) + " bytes, header says " +
                    std::to_string(count) + " floats");
  }
  c.payload.resize(count);
  if (count) std::memcpy(c.payload.data(), body.data(), body.size());
  return c;
}

inline void write_container(const std::filesystem::path& path, Json header,
                            const std::vector<float>& payload) {
  write_file_atomic(path, encode_container(std::move(header), payload));
}

inline Container read_container(const std::filesystem::path& path) {
  return decode_container(read_file_bytes(path), path.string());
}

/// Reads only the JSON header line, without loading the payload.
inline Json read_container_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  try {
    return Json::parse(line);
  } catch (const Json::exception& e) {
    throw DataError(path.string() + ": bad header: " + e.what());
  }
}

}  // namespace ssacrnn
