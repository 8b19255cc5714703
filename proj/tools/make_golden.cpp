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

// Regenerates the golden WAVs and feature blocks checked in under tests/data.
// Only run this when the feature pipeline is meant to change.

#include <filesystem>
#include <iostream>

#include "ssacrnn/features/golden.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_golden <output dir>\n";
    return 2;
  }
  const std::filesystem::path dir = argv[1];
  std::filesystem::create_directories(dir);
  for (const auto& s : ssacrnn::golden_signals()) {
    const auto wav = dir / (s.name + ".wav");
    ssacrnn::write_wav(wav, s.samples, ssacrnn::kGoldenSampleRate);
    ssacrnn::write_file_atomic(dir / (s.name + ".feat"), ssacrnn::golden_block_bytes(wav, s.name));
    std::cout << "wrote " << wav.string() << " and its golden block\n";
  }
  return 0;
}
