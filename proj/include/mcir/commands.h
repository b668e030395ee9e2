// Copyright 2026 The MCIR Authors.
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Pipeline commands behind the mcir CLI verbs.
//
// Layout under the output directory (names from [paths]):
//   <data_dir>/pretrain.jsonl, pretrain_images.mcir
//   <data_dir>/<set>_cases.jsonl, <set>_gallery.jsonl,
//              <set>_reference_images.mcir, <set>_gallery_images.mcir
//     for set "eval" (the benchmark) and "combiner" (supervised triplets,
//     split "train" or "heldout")
//   <checkpoint>, <init_checkpoint>, <combiner_checkpoint>, <index>
//   <reports>/loss_log.jsonl, eval_<mode>.{jsonl,txt}, ...

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mcir/checkpoint.h"
#include "mcir/config.h"
#include "mcir/metrics.h"
#include "mcir/pretrain.h"
#include "mcir/synthdata.h"

namespace mcir {

enum class EvalMode {
  kMaskedTuned,
  kImageOnly,
  kTextOnly,
  kAdditiveBaseline,
  kCombiner,
};

// "masked_tuned", "image_only", "text_only", "additive_baseline", "combiner".
std::string EvalModeName(EvalMode mode);
// Throws ConfigError for an unknown name.
EvalMode ParseEvalMode(const std::string& name);

// A pipeline run: a validated config plus the directory relative paths
// resolve against.
class Pipeline {
 public:
  Pipeline(RunConfig config, std::filesystem::path out_dir);

  const RunConfig& config() const { return config_; }
  std::filesystem::path Resolve(const std::string& path) const;
  std::filesystem::path DataPath(const std::string& file) const;
  std::filesystem::path ReportPath(const std::string& file) const;

  // Writes every dataset file; byte-identical for fixed seeds.
  void GenData() const;

  // Writes the init checkpoint, the trained checkpoint and the loss log.
  // Throws DataError if the dataset is missing, DivergenceError on a
  // non-finite loss.
  TrainResult Train() const;

  // Trains the combiner on the frozen tuned checkpoint and writes
  // <combiner_checkpoint>. Throws InvariantError if the backbone changed.
  // Reports held-out R@1 of the combiner and of additive composition.
  struct CombinerOutcome {
    CombinerTrainResult result;
    MetricsReport combiner_heldout;
    MetricsReport additive_heldout;
    std::uint64_t backbone_before = 0;
    std::uint64_t backbone_after = 0;
  };
  CombinerOutcome TrainCombinerCmd() const;

  // Index of every gallery image under the tuned checkpoint.
  GalleryIndex BuildIndexCmd() const;

  // Builds per-case indices, composes queries for `mode`, evaluates and
  // writes eval_<mode>.jsonl, eval_<mode>.txt and rankings_<mode>.jsonl.
  MetricsReport Eval(EvalMode mode) const;

  // Trains one model per ratio, evaluates masked_tuned with w = ratio and
  // writes ablation.jsonl and ablation.txt.
  struct AblationRow {
    double ratio = 0.0;
    MetricsReport report;
    double final_loss = 0.0;
  };
  std::vector<AblationRow> Ablate(const std::vector<double>& ratios) const;

 private:
  RunConfig config_;
  std::filesystem::path out_dir_;
};

// The per-ratio table written by Ablate.
std::string AblationTable(const std::vector<Pipeline::AblationRow>& rows);

// Human-readable summary of any MCIR container file.
std::string InspectContainer(const std::filesystem::path& path);

// Comma-separated ratios, each in [0, 1). Throws ConfigError on an empty or
// malformed list.
std::vector<double> ParseRatios(const std::string& text);

struct LoadedBenchmark {
  std::vector<CirEvalCase> cases;
  std::vector<std::string> splits;       // per case
  std::vector<GalleryImage> references;  // one per case, same order
  std::vector<GalleryImage> gallery;     // all cases, manifest order
};

// Reads one case set ("eval" or "combiner") from data_dir. Throws
// DataError if any file is missing or inconsistent.
LoadedBenchmark LoadBenchmark(const std::filesystem::path& data_dir,
                              const std::string& set,
                              const EncoderConfig& encoder);

}  // namespace mcir
