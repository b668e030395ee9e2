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

#include "mcir/masking.h"

#include <algorithm>
#include <cmath>

#include "mcir/errors.h"

namespace mcir {

void MaskConfig::Validate() const {
  if (!(ratio >= 0.0 && ratio < 1.0)) {
    throw ConfigError("mask ratio must be in [0, 1), got " +
                      std::to_string(ratio));
  }
}

std::size_t NumMasked(std::size_t num_patches, double ratio) {
  const double x = ratio * static_cast<double>(num_patches);
  // Ties to even regardless of the current floating-point rounding mode.
  const double lo = std::floor(x);
  const double frac = x - lo;
  double r = lo;
  if (frac > 0.5 || (frac == 0.5 && std::fmod(lo, 2.0) != 0.0)) r = lo + 1.0;
  return static_cast<std::size_t>(r);
}

MaskSelection SampleMask(std::size_t num_patches, const MaskConfig& config,
                         Rng& rng) {
  config.Validate();
  if (num_patches == 0) throw InputError("sample_mask: no patches");
  const std::size_t masked = NumMasked(num_patches, config.ratio);
  if (masked >= num_patches) {
    throw DegenerateInputError(
        "sample_mask: ratio " + std::to_string(config.ratio) + " masks all " +
        std::to_string(num_patches) + " patches");
  }
  // Partial Fisher-Yates: the first `masked` slots are the masked patches.
  std::vector<std::size_t> order(num_patches);
  for (std::size_t i = 0; i < num_patches; ++i) order[i] = i;
  for (std::size_t i = 0; i < masked; ++i) {
    const std::size_t j = i + rng.Below(num_patches - i);
    std::swap(order[i], order[j]);
  }
  MaskSelection sel;
  sel.num_patches = num_patches;
  sel.visible_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(masked),
                             order.end());
  std::sort(sel.visible_indices.begin(), sel.visible_indices.end());
  return sel;
}

Rng MaskRng(const MaskConfig& config, std::uint64_t epoch,
            std::uint64_t pair_index) {
  return Rng(DeriveSeed(config.seed, {epoch, pair_index}));
}

PatchTokenSequence ApplyMask(Tape& tape, const PatchTokenSequence& all_tokens,
                             const MaskSelection& sel) {
  if (sel.num_patches != all_tokens.size()) {
    throw ShapeError("apply_mask: selection over " +
                     std::to_string(sel.num_patches) + " patches applied to " +
                     std::to_string(all_tokens.size()) + " tokens");
  }
  if (sel.visible_indices.size() == all_tokens.size()) return all_tokens;
  std::vector<std::size_t> rows;
  rows.reserve(sel.visible_indices.size());
  PatchTokenSequence out;
  for (std::size_t v : sel.visible_indices) {
    if (v >= all_tokens.size()) {
      throw BoundsError("apply_mask: visible index " + std::to_string(v) +
                        " out of range");
    }
    rows.push_back(v);
    out.indices.push_back(all_tokens.indices[v]);
  }
  out.embeddings = tape.GatherRows(all_tokens.embeddings, rows);
  return out;
}

MaskedTriplet BuildTriplet(Tape& tape, const ImageTextPair& pair,
                           const MaskConfig& config,
                           const DualEncoderParams& params,
                           const EncoderConfig& encoder, Rng& rng) {
  MaskedTriplet t;
  const PatchTokenSequence all = PatchEmbed(tape, pair.image, params, encoder);
  t.selection = SampleMask(all.size(), config, rng);
  t.visible_tokens = ApplyMask(tape, all, t.selection);
  t.text_ids = pair.text_ids;
  t.target_image = pair.image;
  return t;
}

}  // namespace mcir
