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

// Uniform random patch masking. Turns an image-text pair into a triplet
// <visible patches of the image, text, full image>.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mcir/encoders.h"
#include "mcir/rng.h"
#include "mcir/tensor.h"

namespace mcir {

struct MaskConfig {
  double ratio = 0.75;  // in [0, 1)
  std::uint64_t seed = 13;

  void Validate() const;
};

// round(ratio * num_patches), ties to even.
std::size_t NumMasked(std::size_t num_patches, double ratio);

struct MaskSelection {
  std::size_t num_patches = 0;
  std::vector<std::size_t> visible_indices;  // strictly increasing

  std::size_t num_masked() const {
    return num_patches - visible_indices.size();
  }
  bool operator==(const MaskSelection&) const = default;
};

// Masks exactly NumMasked(num_patches, ratio) patches chosen uniformly
// without replacement. Throws DegenerateInputError when every patch would be
// masked.
MaskSelection SampleMask(std::size_t num_patches, const MaskConfig& config,
                         Rng& rng);

// Substream for one visit of one pair, so the whole masking stream is a pure
// function of (seed, epoch, pair index).
Rng MaskRng(const MaskConfig& config, std::uint64_t epoch,
            std::uint64_t pair_index);

// Subsequence at sel.visible_indices, original indices preserved.
PatchTokenSequence ApplyMask(Tape& tape, const PatchTokenSequence& all_tokens,
                             const MaskSelection& sel);

struct ImageTextPair {
  std::string id;
  Tensor image;               // [channels x H x W]
  std::vector<int> text_ids;  // tokenized caption
};

struct MaskedTriplet {
  MaskSelection selection;
  PatchTokenSequence visible_tokens;  // query image tokens
  std::vector<int> text_ids;
  Tensor target_image;
};

// Patch-embeds pair.image on `tape`, draws a fresh mask from `rng` and keeps
// the visible tokens. The triplet's tokens belong to `tape`.
MaskedTriplet BuildTriplet(Tape& tape, const ImageTextPair& pair,
                           const MaskConfig& config,
                           const DualEncoderParams& params,
                           const EncoderConfig& encoder, Rng& rng);

}  // namespace mcir
