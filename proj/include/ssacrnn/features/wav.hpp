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
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ssacrnn/common/container.hpp"
#include "ssacrnn/common/errors.hpp"

namespace ssacrnn {

struct WavAudio {
  std::vector<double> samples;  // mono, in [-1, 1]
  int sample_rate = 0;
};

namespace detail {

inline std::uint32_t le32(const char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

inline std::uint16_t le16(const char* p) {
  std::uint16_t v;
  std::memcpy(&v, p, 2);
  return v;
}

template <class T>
void put_le(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

}  // namespace detail

/// Decodes RIFF/WAVE, PCM 16-bit, mono. Anything else is a DataError.
inline WavAudio decode_wav(std::string_view bytes, const std::string& name = "wav") {
  if (bytes.size() < 12 || bytes.substr(0, 4) != "RIFF" || bytes.substr(8, 4) != "WAVE") {
    throw DataError(name + ": not a RIFF/WAVE file");
  }
  WavAudio audio;
  bool have_format = false;
  int channels = 0, bits = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string_view id = bytes.substr(pos, 4);
    const std::uint32_t size = detail::le32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw DataError(name + ": truncated chunk '" + std::string(id) + "'");
    if (id == "fmt ") {
      if (size < 16) throw DataError(name + ": short fmt chunk");
      const std::uint16_t format = detail::le16(bytes.data() + body);
      channels = detail::le16(bytes.data() + body + 2);
      audio.sample_rate = static_cast<int>(detail::le32(bytes.data() + body + 4));
      bits = detail::le16(bytes.data() + body + 14);
      if (format != 1) throw DataError(name + ": only PCM is supported (format tag " + std::to_string(format) + ")");
      if (channels != 1) {
        throw DataError(name + ": expected mono audio, found " + std::to_string(channels) + " channels");
      }
      if (bits != 16) throw DataError(name + ": expected 16-bit samples, found " + std::to_string(bits));
      have_format = true;
    } else if (id == "data") {
      if (!have_format) throw DataError(name + ": data chunk before fmt chunk");
      const std::size_t n = size / 2;
      audio.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        audio.samples[i] = static_cast<std::int16_t>(detail::le16(bytes.data() + body + 2 * i)) / 32768.0;
      }
      if (audio.samples.empty()) throw DataError(name + ": no samples");
      if (audio.sample_rate <= 0) throw DataError(name + ": invalid sample rate");
      return audio;
    }
    pos = body + size + (size & 1u);
  }
  throw DataError(name + ": no data chunk");
}

inline WavAudio read_wav(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const MissingArtifactError& e) {
    throw DataError(e.what());
  }
  return decode_wav(bytes, path.string());
}

inline std::string encode_wav(const std::vector<double>& samples, int sample_rate) {
  std::string out;
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.append("RIFF");
  detail::put_le<std::uint32_t>(out, 36 + data_bytes);
  out.append("WAVEfmt ");
  detail::put_le<std::uint32_t>(out, 16);
  detail::put_le<std::uint16_t>(out, 1);
  detail::put_le<std::uint16_t>(out, 1);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate * 2));
  detail::put_le<std::uint16_t>(out, 2);
  detail::put_le<std::uint16_t>(out, 16);
  out.append("data");
  detail::put_le<std::uint32_t>(out, data_bytes);
  for (double s : samples) {
    const double clipped = std::clamp(s, -1.0, 32767.0 / 32768.0);
    detail::put_le<std::int16_t>(out, static_cast<std::int16_t>(std::lround(clipped * 32768.0)));
  }
  return out;
}

inline void write_wav(const std::filesystem::path& path, const std::vector<double>& samples,
                      int sample_rate) {
  write_file_atomic(path, encode_wav(samples, sample_rate));
}

}  // namespace ssacrnn
