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

// Run configuration: an INI-style file with typed keys.
//
//   # comment
//   [encoder]
//   embed_dim = 64
//
// Required sections: encoder, training, masking, data, eval, paths.
// Optional: combiner. Omitted keys keep their defaults; unknown sections or
// keys throw ConfigError before anything runs.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mcir/combiner.h"
#include "mcir/encoders.h"
#include "mcir/masking.h"
#include "mcir/metrics.h"
#include "mcir/pretrain.h"
#include "mcir/synthdata.h"

namespace mcir {

struct DataConfig {
  std::size_t n_pairs = 2000;
  std::size_t n_eval = 300;
  std::size_t gallery_size = 50;
  std::uint64_t pretrain_seed = 101;
  std::uint64_t eval_seed = 202;
  SynthConfig synth;
};

struct EvalConfig {
  EvalProtocol protocol;
  // Unset: use the mask ratio stored in the checkpoint.
  std::optional<double> inference_weight;
};

struct CombinerRunConfig {
  CombinerConfig combiner;
  std::size_t n_train = 200;
  std::size_t n_heldout = 100;
  std::uint64_t data_seed = 303;
};

// Relative paths resolve against the output directory.
struct PathsConfig {
  std::string data_dir = "data";
  std::string checkpoint = "checkpoint.mcir";
  std::string init_checkpoint = "checkpoint_init.mcir";
  std::string combiner_checkpoint = "checkpoint_combiner.mcir";
  std::string index = "index.mcir";
  std::string reports = "reports";
};

struct RunConfig {
  EncoderConfig encoder;
  TrainConfig training;  // training.mask is the [masking] section
  DataConfig data;
  EvalConfig eval;
  CombinerRunConfig combiner;
  PathsConfig paths;

  // Throws ConfigError on syntax errors, unknown or missing sections,
  // unknown keys, bad values and inconsistent settings.
  static RunConfig Parse(const std::string& text);
  static RunConfig Load(const std::filesystem::path& path);

  // Serializes every key; Parse(Render()) reproduces this config.
  std::string Render() const;

  // Reseeds training, masking and encoder init.
  void OverrideSeed(std::uint64_t seed);
  void Validate() const;
};

}  // namespace mcir
