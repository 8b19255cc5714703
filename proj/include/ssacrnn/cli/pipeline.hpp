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
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ssacrnn/cli/run_config.hpp"
#include "ssacrnn/common/container.hpp"
#include "ssacrnn/evaluation/folds.hpp"
#include "ssacrnn/evaluation/metrics.hpp"
#include "ssacrnn/evaluation/synth.hpp"
#include "ssacrnn/features/cache.hpp"
#include "ssacrnn/features/wav.hpp"
#include "ssacrnn/model/checkpoint.hpp"
#include "ssacrnn/model/predict.hpp"
#include "ssacrnn/training/trainer.hpp"

namespace ssacrnn {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- features

struct FeatureReport {
  std::size_t utterances = 0;  // manifest entries
  std::size_t extracted = 0;   // utterances (re)computed this run
  std::size_t skipped = 0;     // up to date, left untouched
  std::size_t failed = 0;      // recorded in errors.tsv
  std::size_t blocks_written = 0;
};

inline constexpr const char* kSpeakerTable = "speakers.tsv";
inline constexpr const char* kErrorTable = "errors.tsv";

namespace detail {

inline bool block_is_current(const fs::path& path, const std::string& source_hash, const Json& framing) {
  if (!fs::exists(path)) return false;
  try {
    const Json h = read_container_header(path);
    return h.value("source_hash", "") == source_hash && h.value("framing", Json()) == framing;
  } catch (const std::exception&) {
    return false;
  }
}

inline std::string tsv_field(std::string s) {
  for (char& c : s) {
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace detail

/// Extracts raw (un-normalized) log-Mel blocks for every manifest entry into
/// the cache. Entries whose audio hash and framing match the cached block are
/// skipped. Unreadable or invalid audio is recorded in errors.tsv and the run
/// continues; a malformed manifest aborts.
inline FeatureReport cmd_features(const RunConfig& cfg, std::ostream& log) {
  const auto entries = read_manifest(cfg.manifest);
  if (entries.empty()) throw DataError("manifest " + cfg.manifest.string() + " lists no utterances");
  fs::create_directories(cfg.cache_dir);
  const FramingOptions framing;
  const Json framing_header = framing_json(framing);

  FeatureReport report;
  std::string errors = "utterance_id\tpath\terror\n";
  std::map<std::string, std::string> genders;
  std::set<std::string> ids;
  for (const auto& e : entries) {
    ++report.utterances;
    if (!ids.insert(e.utterance_id).second) throw DataError("manifest lists utterance '" + e.utterance_id + "' twice");
    auto& g = genders[e.speaker_id];
    if (g.empty() || g == "?") g = e.gender.empty() ? "?" : e.gender;
    try {
      const std::string hash = file_hash(e.path);
      if (detail::block_is_current(block_path(cfg.cache_dir, e.utterance_id, 0), hash, framing_header)) {
        ++report.skipped;
        continue;
      }
      const WavAudio wav = read_wav(e.path);
      UtteranceRecord u{wav.samples, wav.sample_rate, e.speaker_id, e.emotion_label, e.utterance_id};
      validate(u, default_emotions());
      const auto blocks = extract_blocks(u, framing);
      if (blocks.empty()) throw DataError(e.utterance_id + ": too short for a single segment");
      for (const auto& b : blocks) {
        write_file_atomic(block_path(cfg.cache_dir, b.utterance_id, b.segment_index), encode_block(b, framing, hash));
        ++report.blocks_written;
      }
      ++report.extracted;
    } catch (const std::exception& ex) {
      ++report.failed;
      errors += detail::tsv_field(e.utterance_id) + '\t' + detail::tsv_field(e.path.generic_string()) + '\t' +
                detail::tsv_field(ex.what()) + '\n';
      log << "error: " << ex.what() << '\n';
    }
  }
  std::string speakers = "speaker_id\tgender\n";
  for (const auto& [id, g] : genders) speakers += id + '\t' + g + '\n';
  write_file_atomic(cfg.cache_dir / kSpeakerTable, speakers);
  write_file_atomic(cfg.cache_dir / kErrorTable, errors);
  log << "features: " << report.utterances << " utterances, " << report.extracted << " extracted, " << report.skipped
      << " up to date, " << report.failed << " failed\n";
  return report;
}

// ------------------------------------------------------------------ corpus

/// Cached blocks, normalized per speaker, plus the speaker table.
struct Corpus {
  std::vector<FeatureBlock> blocks;
  std::vector<Speaker> speakers;
};

inline std::vector<Speaker> read_speaker_table(const fs::path& cache_dir) {
  const fs::path path = cache_dir / kSpeakerTable;
  std::ifstream in(path);
  if (!in) throw MissingArtifactError(path.string() + " does not exist; run `ssacrnn features` first");
  std::vector<Speaker> out;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError(path.string() + ": malformed line '" + line + "'");
    const std::string g = line.substr(tab + 1);
    out.push_back({line.substr(0, tab), g.empty() ? '?' : g[0]});
  }
  return out;
}

inline Corpus load_corpus(const RunConfig& cfg, std::ostream& log) {
  Corpus c;
  std::vector<std::string> warnings;
  c.blocks = speaker_normalize(load_cache(cfg.cache_dir), &warnings);
  for (const auto& w : warnings) log << "warning: " << w << '\n';
  // Only speakers that actually have blocks take part in fold planning.
  std::set<std::string> present;
  for (const auto& b : c.blocks) present.insert(b.speaker_id);
  for (const auto& s : read_speaker_table(cfg.cache_dir)) {
    if (present.count(s.id)) c.speakers.push_back(s);
  }
  return c;
}

inline std::vector<FoldPlan> plan_for(const RunConfig& cfg, const std::vector<Speaker>& speakers) {
  return plan_folds(speakers, cfg.layout, cfg.mode, cfg.seed, cfg.folds);
}

inline std::vector<FeatureBlock> blocks_of(const std::vector<FeatureBlock>& blocks,
                                           const std::vector<std::string>& speakers) {
  std::vector<FeatureBlock> out;
  for (const auto& b : blocks) {
    if (std::find(speakers.begin(), speakers.end(), b.speaker_id) != speakers.end()) out.push_back(b);
  }
  return out;
}

// ------------------------------------------------------------------- train

inline fs::path variant_dir(const RunConfig& cfg) { return cfg.output_dir / to_string(cfg.variant); }

inline fs::path fold_dir(const RunConfig& cfg, std::size_t fold) {
  char name[16];
  std::snprintf(name, sizeof name, "fold%02zu", fold);
  return variant_dir(cfg) / name;
}

/// Seed of one fold and stage, derived from the run seed.
inline std::uint64_t stage_seed(std::uint64_t seed, std::size_t fold, Stage stage) {
  return fnv1a(std::to_string(seed) + "/fold" + std::to_string(fold) + "/" + to_string(stage));
}

enum class StageSelection { all, sp, em };

inline StageSelection stage_selection_from_string(const std::string& s) {
  if (s == "all") return StageSelection::all;
  if (s == "sp") return StageSelection::sp;
  if (s == "em") return StageSelection::em;
  throw ConfigError("unknown stage '" + s + "' (expected all, sp or em)");
}

/// Splits the speaker classifier's data: every k-th utterance of each
/// speaker (in utterance id order) validates, the rest trains.
inline std::pair<std::vector<FeatureBlock>, std::vector<FeatureBlock>> split_speaker_data(
    const std::vector<FeatureBlock>& blocks, std::size_t every) {
  std::map<std::string, std::set<std::string>> utterances;
  for (const auto& b : blocks) utterances[b.speaker_id].insert(b.utterance_id);
  std::set<std::string> held_out;
  for (const auto& [speaker, ids] : utterances) {
    std::size_t i = 0;
    for (const auto& id : ids) {
      if (++i % every == 0) held_out.insert(id);
    }
  }
  std::pair<std::vector<FeatureBlock>, std::vector<FeatureBlock>> out;
  for (const auto& b : blocks) (held_out.count(b.utterance_id) ? out.second : out.first).push_back(b);
  return out;
}

class EpochLog {
 public:
  explicit EpochLog(const fs::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw DataError("cannot write " + path.string());
    out_ << "epoch\tloss\tvalid_uar\twall_s\tincidents\n";
  }
  void operator()(const EpochRecord& r) { out_ << format_epoch_line(r) << '\n' << std::flush; }
  void finish(const TrainResult& r) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "best\t%zu\t%.6f\n", r.best_epoch, r.best_uar);
    out_ << buf << std::flush;
  }

 private:
  std::ofstream out_;
};

inline Json string_array(const std::vector<std::string>& v) { return Json(v); }

/// Trains the speaker classifier of one fold on every speaker that fold does
/// not exclude, and writes it frozen to sp.ckpt.
inline void train_speaker_stage(const RunConfig& cfg, const Corpus& corpus, const FoldPlan& plan, std::ostream& log) {
  std::vector<std::string> speakers;
  for (const auto& s : corpus.speakers) {
    if (!plan.is_excluded(s.id)) speakers.push_back(s.id);
  }
  std::sort(speakers.begin(), speakers.end());
  for (const auto& s : speakers) {
    if (plan.is_excluded(s)) throw std::logic_error("excluded speaker in the speaker registry");
  }
  const auto [train, valid] = split_speaker_data(blocks_of(corpus.blocks, speakers), cfg.sp_holdout_every);
  const std::uint64_t seed = stage_seed(cfg.seed, plan.index, Stage::sp);
  TrainConfig tc = cfg.train_config(Stage::sp);
  tc.seed = seed;
  const fs::path dir = fold_dir(cfg, plan.index);
  fs::create_directories(dir);
  log << "fold " << plan.index << " sp: " << speakers.size() << " speakers, " << train.size() << " train / "
      << valid.size() << " valid segments\n";
  EpochLog epochs(dir / "sp.log");
  Classifier sp = make_classifier(cfg.model, Pooling::self_attention, cfg.sp_embedding, speakers, seed);
  TrainResult result = train_stage(std::move(sp), train, valid, tc, nullptr, {}, std::ref(epochs));
  epochs.finish(result);
  result.best.freeze();
  const Json meta{{"fold", plan.index},
                  {"mode", to_string(cfg.mode)},
                  {"speakers", string_array(speakers)},
                  {"sp_excluded_speakers", string_array(plan.sp_excluded_speakers)},
                  {"best_epoch", result.best_epoch},
                  {"best_uar", result.best_uar}};
  save_checkpoint(dir / "sp.ckpt", result.best, "sp", seed, meta);
}

/// Loads a fold's speaker classifier and checks it was trained for this
/// fold, never having seen the fold's excluded speakers.
inline Classifier load_speaker_stage(const RunConfig& cfg, const FoldPlan& plan, std::string* hash = nullptr) {
  const fs::path path = fold_dir(cfg, plan.index) / "sp.ckpt";
  if (!fs::exists(path)) {
    throw MissingArtifactError(path.string() + " does not exist; run `ssacrnn train --stage sp` for fold " +
                               std::to_string(plan.index));
  }
  LoadedCheckpoint ck = load_checkpoint(path);
  const Json& meta = ck.header.at("meta");
  auto excluded = plan.sp_excluded_speakers;
  std::sort(excluded.begin(), excluded.end());
  auto recorded = meta.value("sp_excluded_speakers", std::vector<std::string>{});
  std::sort(recorded.begin(), recorded.end());
  if (meta.value("fold", std::size_t{0}) != plan.index || recorded != excluded) {
    throw DataError(path.string() + " was trained for a different fold assignment");
  }
  for (const auto& s : ck.classifier.classes) {
    if (plan.is_excluded(s)) throw DataError(path.string() + " was trained on excluded speaker " + s);
  }
  if (!ck.classifier.frozen) throw DataError(path.string() + " is not a frozen speaker classifier");
  if (hash) *hash = file_hash(path);
  return std::move(ck.classifier);
}

inline void train_emotion_stage(const RunConfig& cfg, const Corpus& corpus, const FoldPlan& plan, std::ostream& log) {
  const auto train = blocks_of(corpus.blocks, plan.train_speakers);
  const auto valid = blocks_of(corpus.blocks, plan.valid_speakers);
  const std::uint64_t seed = stage_seed(cfg.seed, plan.index, Stage::em);
  TrainConfig tc = cfg.train_config(Stage::em);
  tc.seed = seed;
  const fs::path dir = fold_dir(cfg, plan.index);
  fs::create_directories(dir);

  std::optional<Classifier> sp;
  std::string sp_hash;
  if (cfg.uses_speaker_tower()) sp = load_speaker_stage(cfg, plan, &sp_hash);
  const Pooling pooling = sp ? Pooling::speaker_attention : Pooling::self_attention;
  Classifier em = make_classifier(cfg.model, pooling, cfg.em_embedding, default_emotions(), seed,
                                  sp ? sp->config.encoder_dim() : 0);
  log << "fold " << plan.index << " em: " << train.size() << " train / " << valid.size() << " valid segments\n";
  EpochLog epochs(dir / "em.log");
  TrainResult result = train_stage(std::move(em), train, valid, tc, sp ? &*sp : nullptr, {}, std::ref(epochs));
  epochs.finish(result);
  Json meta{{"fold", plan.index},
            {"variant", to_string(cfg.variant)},
            {"valid_speakers", string_array(plan.valid_speakers)},
            {"best_epoch", result.best_epoch},
            {"best_uar", result.best_uar}};
  if (sp) meta["sp_checkpoint_hash"] = sp_hash;
  save_checkpoint(dir / "em.ckpt", result.best, "em", seed, meta);
}

inline void run_fold(const RunConfig& cfg, const Corpus& corpus, const FoldPlan& plan, StageSelection stages,
                     std::ostream& log) {
  if (stages == StageSelection::sp && !cfg.uses_speaker_tower()) {
    throw ConfigError("variant " + to_string(cfg.variant) + " has no speaker stage");
  }
  if (cfg.uses_speaker_tower() && stages != StageSelection::em) train_speaker_stage(cfg, corpus, plan, log);
  if (stages != StageSelection::sp) train_emotion_stage(cfg, corpus, plan, log);
}

/// Trains every fold (or only `only_fold`, 1-based) of the configured run.
inline void cmd_train(const RunConfig& cfg, StageSelection stages, std::ostream& log,
                      std::optional<std::size_t> only_fold = std::nullopt) {
  const Corpus corpus = load_corpus(cfg, log);
  const auto plans = plan_for(cfg, corpus.speakers);
  if (only_fold && (*only_fold == 0 || *only_fold > plans.size())) {
    throw ConfigError("fold " + std::to_string(*only_fold) + " does not exist (run has " +
                      std::to_string(plans.size()) + " folds)");
  }
  fs::create_directories(variant_dir(cfg));
  write_file_atomic(variant_dir(cfg) / "folds.tsv", format_fold_plans(plans));
  write_file_atomic(variant_dir(cfg) / "config.txt", format_run_config(cfg));
  for (const auto& plan : plans) {
    if (only_fold && plan.index != *only_fold) continue;
    run_fold(cfg, corpus, plan, stages, log);
  }
}

// -------------------------------------------------------------------- eval

struct EvalReport {
  std::vector<double> fold_uar;
  Aggregate summary;
  ConfusionMatrix total;
};

/// Scores every fold's emotion classifier on its validation speakers and
/// writes report.txt, confusion.csv, confusion_normalized.csv and
/// embeddings.bin under the variant directory.
inline EvalReport cmd_eval(const RunConfig& cfg, std::ostream& log) {
  const Corpus corpus = load_corpus(cfg, log);
  const auto plans = plan_for(cfg, corpus.speakers);
  std::vector<std::string> missing;
  for (const auto& plan : plans) {
    const fs::path dir = fold_dir(cfg, plan.index);
    if (!fs::exists(dir / "em.ckpt")) missing.push_back((dir / "em.ckpt").string());
    if (cfg.uses_speaker_tower() && !fs::exists(dir / "sp.ckpt")) missing.push_back((dir / "sp.ckpt").string());
  }
  if (!missing.empty()) {
    std::string msg = "missing fold artifacts; run `ssacrnn train` first:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw MissingArtifactError(msg);
  }

  EvalReport report;
  report.total = ConfusionMatrix(default_emotions());
  std::string lines;
  Json ids = Json::array(), labels = Json::array(), speakers = Json::array(), folds = Json::array();
  std::vector<float> embeddings;
  std::size_t width = 0;
  for (const auto& plan : plans) {
    const fs::path dir = fold_dir(cfg, plan.index);
    const Classifier em = load_checkpoint(dir / "em.ckpt").classifier;
    std::optional<Classifier> sp;
    if (cfg.uses_speaker_tower()) sp = load_speaker_stage(cfg, plan);
    const auto valid = blocks_of(corpus.blocks, plan.valid_speakers);
    std::vector<SegmentPrediction> segments;
    for (const auto& b : valid) segments.push_back(predict_segment(em, b.data, sp ? &*sp : nullptr));
    ConfusionMatrix cm(em.classes);
    for (const auto& u : aggregate_utterances(valid, segments)) {
      cm.add(index_of(em.classes, u.label), u.predicted);
      ids.push_back(u.utterance_id);
      labels.push_back(u.label);
      speakers.push_back(u.speaker_id);
      folds.push_back(plan.index);
      width = u.embedding.size();
      embeddings.insert(embeddings.end(), u.embedding.begin(), u.embedding.end());
    }
    const double score = validation_uar(cm);
    report.fold_uar.push_back(score);
    report.total += cm;
    char buf[64];
    std::snprintf(buf, sizeof buf, "fold %02zu\tUAR\t%.6f\n", plan.index, score);
    lines += buf;
  }
  report.summary = aggregate(report.fold_uar);
  lines += "aggregate\tUAR\t" + format_aggregate(report.summary) + '\n';
  const fs::path out = variant_dir(cfg);
  fs::create_directories(out);
  write_file_atomic(out / "report.txt", lines);
  write_file_atomic(out / "confusion.csv", confusion_csv(report.total));
  write_file_atomic(out / "confusion_normalized.csv", normalized_csv(report.total));
  Json header{{"format", "ssacrnn-embeddings"}, {"version", 1},          {"shape", {ids.size(), width}},
              {"utterance_ids", ids},           {"labels", labels},      {"speaker_ids", speakers},
              {"folds", folds},                 {"variant", to_string(cfg.variant)}};
  write_container(out / "embeddings.bin", std::move(header), embeddings);
  log << lines;
  return report;
}

// ------------------------------------------------------------ synth, folds

inline std::vector<ManifestEntry> cmd_synth(const fs::path& dir, const SynthSpec& spec, std::ostream& log) {
  auto entries = synth_corpus(dir, spec);
  log << "synth: wrote " << entries.size() << " utterances to " << dir.string() << '\n';
  return entries;
}

/// Fold plan of the configured layout, from the manifest's speakers.
inline std::vector<FoldPlan> cmd_folds(const RunConfig& cfg) {
  std::map<std::string, char> genders;
  for (const auto& e : read_manifest(cfg.manifest)) {
    char& g = genders.emplace(e.speaker_id, '?').first->second;
    if (g == '?' && !e.gender.empty()) g = e.gender[0];
  }
  std::vector<Speaker> speakers;
  for (const auto& [id, g] : genders) speakers.push_back({id, g});
  return plan_for(cfg, speakers);
}

}  // namespace ssacrnn
