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

// Procedural glyph-grid images with templated captions.
//
// An image is a grid of cells, one per encoder patch. Each cell holds one
// glyph (blank, square, disc, cross) at low or high intensity, drawn fully
// inside the cell, so masking a patch removes exactly that cell. Captions
// list the non-blank cells, e.g. "high square at r0c0 , low disc at r2c3";
// composed-retrieval queries carry one-cell edits such as
// "change r1c2 to high cross".

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcir/encoders.h"
#include "mcir/masking.h"
#include "mcir/rng.h"
#include "mcir/tensor.h"

namespace mcir {

enum class Glyph : std::uint8_t { kBlank, kSquare, kDisc, kCross };
enum class Intensity : std::uint8_t { kLow, kHigh };

struct Cell {
  Glyph glyph = Glyph::kBlank;
  Intensity intensity = Intensity::kLow;  // kLow for blank cells

  bool operator==(const Cell&) const = default;
};

constexpr std::size_t kMaxGrid = 7;
constexpr double kLowLevel = 0.5;
constexpr double kHighLevel = 1.0;

struct AttributeSpec {
  std::size_t grid = 4;
  std::vector<Cell> cells;  // row-major, grid * grid

  static AttributeSpec Blank(std::size_t grid);
  std::size_t num_glyphs() const;  // non-blank cells
  // One character per cell: '.' blank; 's','d','x' low square/disc/cross;
  // 'S','D','X' high.
  std::string Encode() const;
  static AttributeSpec Decode(std::string_view encoded);

  bool operator==(const AttributeSpec&) const = default;
};

// Fixed synthetic vocabulary: template words, intensities, glyph names and
// one tag "r<row>c<col>" per cell of the largest supported grid.
class Vocabulary {
 public:
  static const Vocabulary& Get();

  std::size_t size() const { return words_.size(); }
  const std::string& Word(int id) const;
  // Throws InputError for an unknown word.
  int Id(std::string_view word) const;

  // Whitespace tokenization against the vocabulary.
  std::vector<int> Tokenize(std::string_view text) const;
  std::string Detokenize(std::span<const int> ids) const;

 private:
  Vocabulary();
  std::vector<std::string> words_;
};

std::string CellTag(std::size_t row, std::size_t col);
std::string CellPhrase(const Cell& cell);  // "high square", "blank"

// Grayscale rasterization into every channel. Throws ConfigError when the
// spec grid does not match config.grid() or a patch is smaller than 4 px.
Tensor RenderImage(const AttributeSpec& spec, const EncoderConfig& config);

std::string CaptionText(const AttributeSpec& spec);
std::vector<int> Caption(const AttributeSpec& spec);

struct Modification {
  std::size_t cell = 0;
  Cell value;
};

// "change r1c2 to high cross".
std::string ModificationText(const Modification& mod, std::size_t grid);

struct SynthConfig {
  std::size_t grid = 4;
  std::size_t min_glyphs = 1;
  std::size_t max_glyphs = 4;
  // Share of eval cases that get 2-4 gallery items equal to the target.
  double multi_gt_fraction = 0.25;
  std::size_t subset_size = 6;

  void Validate() const;
};

// Between min_glyphs and max_glyphs (uniform) non-blank cells at distinct
// uniform positions; glyph kind and intensity uniform.
AttributeSpec RandomSpec(const SynthConfig& config, Rng& rng);

struct PretrainPair {
  std::string id;
  AttributeSpec spec;
  std::string caption;
  ImageTextPair pair;
};

// Item i is a pure function of (seed, i).
std::vector<PretrainPair> GenPretrainPairs(std::size_t n, std::uint64_t seed,
                                           const SynthConfig& synth,
                                           const EncoderConfig& encoder);

struct GalleryItem {
  std::string id;
  AttributeSpec spec;
};

struct CirEvalCase {
  std::string query_id;
  std::string reference_id;
  AttributeSpec reference;
  Modification modification;
  std::string modification_text;
  std::vector<int> modification_ids;
  AttributeSpec target;
  // Target, any planted copies of it, and hard-negative distractors, in a
  // shuffled order.
  std::vector<GalleryItem> gallery;
  std::vector<std::string> ground_truth_ids;
  std::vector<std::string> subset_ids;  // CIRR-style group incl. targets
  bool multi_ground_truth = false;
};

// Besides the planted copies, no two gallery items of the whole benchmark
// share a spec, and no reference appears in any gallery. Cases are generated
// in order from per-index substreams; a duplicate against earlier cases is
// resampled.
std::vector<CirEvalCase> GenEvalCases(std::size_t n, std::size_t gallery_size,
                                      std::uint64_t seed,
                                      const SynthConfig& synth);

}  // namespace mcir
