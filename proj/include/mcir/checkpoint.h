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

// Checkpoints and gallery indices stored in the MCIR container.
//
// Checkpoint sections: "config" (strings), "encoder" (tensors named as in
// DualEncoderParams::ForEach), optionally "combiner".
// Index sections: "index_meta" (strings), "ids" (strings), "embeddings".

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "mcir/combiner.h"
#include "mcir/container.h"
#include "mcir/encoders.h"
#include "mcir/retrieval.h"

namespace mcir {

struct Checkpoint {
  EncoderConfig encoder;
  double mask_ratio = 0.75;
  std::int64_t trained_steps = 0;
  DualEncoderParams params;
  std::optional<CombinerParams> combiner;
};

Section EncoderSection(const DualEncoderParams& params);
Section CombinerSection(const CombinerParams& params);

Container ToContainer(const Checkpoint& ckpt);
// Throws DataError on missing sections, unknown tensors or shape mismatch.
Checkpoint FromContainer(const Container& c);

void SaveCheckpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

Container IndexToContainer(const GalleryIndex& index);
GalleryIndex IndexFromContainer(const Container& c);
void SaveIndex(const std::filesystem::path& path, const GalleryIndex& index);
GalleryIndex LoadIndex(const std::filesystem::path& path);

// Shortest text that parses back to the same double.
std::string FormatDouble(double v);

}  // namespace mcir
