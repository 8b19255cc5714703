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

// Command-line front end: features, train, eval, synth, folds.

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ssacrnn/cli/pipeline.hpp"

namespace {

using namespace ssacrnn;

std::vector<std::size_t> parse_ratio(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(static_cast<std::size_t>(std::stoul(item)));
    } catch (const std::exception&) {
      throw ConfigError("--ratio expects comma-separated integers, got '" + text + "'");
    }
  }
  return out;
}

std::vector<std::string> parse_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speaker-conditioned speech emotion recognition"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path, "Run configuration file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--set", overrides, "Override a config key (key=value), repeatable");
  };

  auto* features = app.add_subcommand("features", "Extract log-Mel blocks for every manifest entry into the cache");
  add_config(features);

  std::string stage = "all";
  std::optional<std::size_t> fold;
  auto* train = app.add_subcommand("train", "Train every fold (speaker stage, then emotion stage)");
  add_config(train);
  train->add_option("--stage", stage, "Stages to run")->check(CLI::IsMember({"all", "sp", "em"}));
  train->add_option("--fold", fold, "Train only this fold (1-based)");

  auto* eval = app.add_subcommand("eval", "Score trained folds and write the report");
  add_config(eval);

  auto* folds = app.add_subcommand("folds", "Print the fold assignment of a run");
  add_config(folds);

  std::string synth_out, emotions, ratio;
  SynthSpec spec;
  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus (WAVs and manifest)");
  synth->add_option("-o,--out", synth_out, "Output directory")->required();
  synth->add_option("--speakers", spec.n_speakers, "Number of speakers")->capture_default_str();
  synth->add_option("--per-cell", spec.utterances_per_cell, "Utterances per speaker and emotion")->capture_default_str();
  synth->add_option("--emotions", emotions, "Comma-separated emotion labels");
  synth->add_option("--ratio", ratio, "Comma-separated per-emotion count multipliers, e.g. 8,1,1,1");
  synth->add_option("--seed", spec.seed, "Random seed")->capture_default_str();
  synth->add_option("--noise", spec.noise, "Noise floor standard deviation")->capture_default_str();
  synth->add_option("--seconds", spec.seconds, "Utterance length in seconds")->capture_default_str();
  synth->add_option("--sample-rate", spec.sample_rate, "Sample rate in Hz")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      if (!emotions.empty()) spec.emotions = parse_list(emotions);
      if (!ratio.empty()) spec.emotion_ratio = parse_ratio(ratio);
      cmd_synth(synth_out, spec, std::cout);
      return 0;
    }
    const RunConfig cfg = load_run_config(config_path, overrides);
    if (*features) {
      cmd_features(cfg, std::cerr);  // per-file failures are listed in errors.tsv
      return 0;
    }
    if (*train) cmd_train(cfg, stage_selection_from_string(stage), std::cerr, fold);
    if (*eval) cmd_eval(cfg, std::cout);
    if (*folds) std::cout << format_fold_plans(cmd_folds(cfg));
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const MissingArtifactError& e) {
    std::cerr << "missing: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
