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

#include "mcir/synthdata.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <unordered_map>

#include "mcir/errors.h"

namespace mcir {

namespace {

constexpr Cell kAllValues[] = {
    {Glyph::kBlank, Intensity::kLow},   {Glyph::kSquare, Intensity::kLow},
    {Glyph::kDisc, Intensity::kLow},    {Glyph::kCross, Intensity::kLow},
    {Glyph::kSquare, Intensity::kHigh}, {Glyph::kDisc, Intensity::kHigh},
    {Glyph::kCross, Intensity::kHigh},
};

const char* GlyphWord(Glyph g) {
  switch (g) {
    case Glyph::kBlank: return "blank";
    case Glyph::kSquare: return "square";
    case Glyph::kDisc: return "disc";
    case Glyph::kCross: return "cross";
  }
  return "?";
}

const char* IntensityWord(Intensity i) {
  return i == Intensity::kHigh ? "high" : "low";
}

Cell RandomGlyphCell(Rng& rng) {
  // Non-blank values are kAllValues[1..6].
  return kAllValues[1 + rng.Below(6)];
}

// A value different from every cell in `avoid`.
Cell RandomCellExcept(Rng& rng, std::initializer_list<Cell> avoid) {
  std::vector<Cell> options;
  for (const Cell& c : kAllValues) {
    if (std::find(avoid.begin(), avoid.end(), c) == avoid.end()) {
      options.push_back(c);
    }
  }
  return options[rng.Below(options.size())];
}

std::string Numbered(char prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%c%0*zu", prefix, width, i);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Specs

AttributeSpec AttributeSpec::Blank(std::size_t grid) {
  AttributeSpec s;
  s.grid = grid;
  s.cells.assign(grid * grid, Cell{});
  return s;
}

std::size_t AttributeSpec::num_glyphs() const {
  return static_cast<std::size_t>(
      std::count_if(cells.begin(), cells.end(),
                    [](const Cell& c) { return c.glyph != Glyph::kBlank; }));
}

std::string AttributeSpec::Encode() const {
  std::string out;
  out.reserve(cells.size());
  for (const Cell& c : cells) {
    char ch = '.';
    switch (c.glyph) {
      case Glyph::kBlank: ch = '.'; break;
      case Glyph::kSquare: ch = 's'; break;
      case Glyph::kDisc: ch = 'd'; break;
      case Glyph::kCross: ch = 'x'; break;
    }
    if (c.glyph != Glyph::kBlank && c.intensity == Intensity::kHigh) {
      ch = static_cast<char>(ch - 'a' + 'A');
    }
    out.push_back(ch);
  }
  return out;
}

AttributeSpec AttributeSpec::Decode(std::string_view encoded) {
  const auto grid = static_cast<std::size_t>(
      std::llround(std::sqrt(static_cast<double>(encoded.size()))));
  if (grid == 0 || grid * grid != encoded.size() || grid > kMaxGrid) {
    throw DataError("spec encoding '" + std::string(encoded) +
                    "' is not a square grid of at most " +
                    std::to_string(kMaxGrid) + " cells per side");
  }
  AttributeSpec s = Blank(grid);
  for (std::size_t i = 0; i < encoded.size(); ++i) {
    Cell& c = s.cells[i];
    switch (encoded[i]) {
      case '.': c = {}; break;
      case 's': c = {Glyph::kSquare, Intensity::kLow}; break;
      case 'd': c = {Glyph::kDisc, Intensity::kLow}; break;
      case 'x': c = {Glyph::kCross, Intensity::kLow}; break;
      case 'S': c = {Glyph::kSquare, Intensity::kHigh}; break;
      case 'D': c = {Glyph::kDisc, Intensity::kHigh}; break;
      case 'X': c = {Glyph::kCross, Intensity::kHigh}; break;
      default:
        throw DataError("bad spec character '" + std::string(1, encoded[i]) +
                        "'");
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  words_ = {"empty", "grid", "at", ",", "change", "to",
            "low", "high", "blank", "square", "disc", "cross"};
  for (std::size_t r = 0; r < kMaxGrid; ++r)
    for (std::size_t c = 0; c < kMaxGrid; ++c) words_.push_back(CellTag(r, c));
}

const Vocabulary& Vocabulary::Get() {
  static const Vocabulary vocab;
  return vocab;
}

const std::string& Vocabulary::Word(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
    throw InputError("token id " + std::to_string(id) + " not in vocabulary");
  }
  return words_[static_cast<std::size_t>(id)];
}

int Vocabulary::Id(std::string_view word) const {
  static const std::unordered_map<std::string, int> index = [this] {
    std::unordered_map<std::string, int> m;
    for (std::size_t i = 0; i < words_.size(); ++i)
      m.emplace(words_[i], static_cast<int>(i));
    return m;
  }();
  auto it = index.find(std::string(word));
  if (it == index.end()) {
    throw InputError("word '" + std::string(word) + "' not in vocabulary");
  }
  return it->second;
}

std::vector<int> Vocabulary::Tokenize(std::string_view text) const {
  std::vector<int> ids;
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) ids.push_back(Id(word));
  return ids;
}

std::string Vocabulary::Detokenize(std::span<const int> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += Word(ids[i]);
  }
  return out;
}

std::string CellTag(std::size_t row, std::size_t col) {
  return "r" + std::to_string(row) + "c" + std::to_string(col);
}

std::string CellPhrase(const Cell& cell) {
  if (cell.glyph == Glyph::kBlank) return "blank";
  return std::string(IntensityWord(cell.intensity)) + " " +
         GlyphWord(cell.glyph);
}

// ---------------------------------------------------------------------------
// Rendering and text

Tensor RenderImage(const AttributeSpec& spec, const EncoderConfig& config) {
  if (spec.grid != config.grid() || spec.cells.size() != spec.grid * spec.grid) {
    throw ConfigError("spec grid " + std::to_string(spec.grid) +
                      " does not match encoder patch grid " +
                      std::to_string(config.grid()));
  }
  const std::size_t p = config.patch_size, s = config.image_size;
  if (p < 4) throw ConfigError("glyph rendering needs patches of >= 4 px");
  const double center = static_cast<double>(p) / 2.0;
  const double radius = static_cast<double>(p - 2) / 2.0;
  const double half_bar = std::max(1.0, static_cast<double>(p) / 8.0);
  auto inside = [&](Glyph g, std::size_t y, std::size_t x) {
    if (y < 1 || x < 1 || y > p - 2 || x > p - 2) return false;
    const double dy = static_cast<double>(y) + 0.5 - center;
    const double dx = static_cast<double>(x) + 0.5 - center;
    switch (g) {
      case Glyph::kBlank: return false;
      case Glyph::kSquare: return true;
      case Glyph::kDisc: return dy * dy + dx * dx <= radius * radius;
      case Glyph::kCross:
        return std::abs(dy) < half_bar || std::abs(dx) < half_bar;
    }
    return false;
  };
  std::vector<double> px(config.channels * s * s, 0.0);
  for (std::size_t cell = 0; cell < spec.cells.size(); ++cell) {
    const Cell& c = spec.cells[cell];
    if (c.glyph == Glyph::kBlank) continue;
    const double level =
        c.intensity == Intensity::kHigh ? kHighLevel : kLowLevel;
    const std::size_t oy = (cell / spec.grid) * p, ox = (cell % spec.grid) * p;
    for (std::size_t y = 0; y < p; ++y) {
      for (std::size_t x = 0; x < p; ++x) {
        if (!inside(c.glyph, y, x)) continue;
        for (std::size_t ch = 0; ch < config.channels; ++ch)
          px[(ch * s + oy + y) * s + ox + x] = level;
      }
    }
  }
  return Tensor::FromData({config.channels, s, s}, std::move(px));
}

std::string CaptionText(const AttributeSpec& spec) {
  std::string out;
  for (std::size_t i = 0; i < spec.cells.size(); ++i) {
    const Cell& c = spec.cells[i];
    if (c.glyph == Glyph::kBlank) continue;
    if (!out.empty()) out += " , ";
    out += CellPhrase(c) + " at " + CellTag(i / spec.grid, i % spec.grid);
  }
  return out.empty() ? "empty grid" : out;
}

std::vector<int> Caption(const AttributeSpec& spec) {
  return Vocabulary::Get().Tokenize(CaptionText(spec));
}

std::string ModificationText(const Modification& mod, std::size_t grid) {
  return "change " + CellTag(mod.cell / grid, mod.cell % grid) + " to " +
         CellPhrase(mod.value);
}

// ---------------------------------------------------------------------------
// Generators

void SynthConfig::Validate() const {
  if (grid == 0 || grid > kMaxGrid) {
    throw ConfigError("synthetic grid must be in [1, " +
                      std::to_string(kMaxGrid) + "]");
  }
  if (min_glyphs > max_glyphs || max_glyphs > grid * grid) {
    throw ConfigError("need min_glyphs <= max_glyphs <= grid * grid");
  }
  if (!(multi_gt_fraction >= 0.0 && multi_gt_fraction <= 1.0)) {
    throw ConfigError("multi_gt_fraction must be in [0, 1]");
  }
  if (subset_size == 0) throw ConfigError("subset_size must be positive");
}

AttributeSpec RandomSpec(const SynthConfig& config, Rng& rng) {
  AttributeSpec s = AttributeSpec::Blank(config.grid);
  const std::size_t k =
      config.min_glyphs + rng.Below(config.max_glyphs - config.min_glyphs + 1);
  const std::size_t n = s.cells.size();
  // Partial Fisher-Yates for k distinct positions.
  std::vector<std::size_t> pos(n);
  for (std::size_t i = 0; i < n; ++i) pos[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(pos[i], pos[i + rng.Below(n - i)]);
    s.cells[pos[i]] = RandomGlyphCell(rng);
  }
  return s;
}

std::vector<PretrainPair> GenPretrainPairs(std::size_t n, std::uint64_t seed,
                                           const SynthConfig& synth,
                                           const EncoderConfig& encoder) {
  synth.Validate();
  if (n == 0) throw ConfigError("gen_pretrain_pairs: n must be >= 1");
  std::vector<PretrainPair> out;
  out.reserve(n);
  const int width = n > 100000 ? 7 : 6;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(DeriveSeed(seed, {0x9a1f, i}));
    PretrainPair p;
    p.id = Numbered('p', i, width);
    p.spec = RandomSpec(synth, rng);
    p.caption = CaptionText(p.spec);
    p.pair.id = p.id;
    p.pair.image = RenderImage(p.spec, encoder);
    p.pair.text_ids = Vocabulary::Get().Tokenize(p.caption);
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

constexpr int kNumHardKinds = 3;
constexpr int kRandomKind = 3;

// One draw of a distractor of the given kind; the caller rejects collisions.
AttributeSpec DrawDistractor(int kind, const AttributeSpec& ref,
                             const AttributeSpec& target,
                             const Modification& mod,
                             const SynthConfig& synth, Rng& rng) {
  const std::size_t n = ref.cells.size();
  auto other_cell = [&] {
    if (n == 1) return mod.cell;
    std::size_t c = rng.Below(n - 1);
    return c >= mod.cell ? c + 1 : c;
  };
  switch (kind) {
    case 0: {  // same cell, different edit
      AttributeSpec d = ref;
      d.cells[mod.cell] = RandomCellExcept(rng, {ref.cells[mod.cell], mod.value});
      return d;
    }
    case 1: {  // the right edit plus one unrelated change
      AttributeSpec d = target;
      const std::size_t c = other_cell();
      d.cells[c] = RandomCellExcept(rng, {target.cells[c]});
      return d;
    }
    case 2: {  // reference with an unrelated change
      AttributeSpec d = ref;
      const std::size_t c = other_cell();
      d.cells[c] = RandomCellExcept(rng, {ref.cells[c]});
      return d;
    }
    default:
      return RandomSpec(synth, rng);
  }
}

}  // namespace

std::vector<CirEvalCase> GenEvalCases(std::size_t n, std::size_t gallery_size,
                                      std::uint64_t seed,
                                      const SynthConfig& synth) {
  synth.Validate();
  if (n == 0) throw ConfigError("gen_eval_cases: n must be >= 1");
  if (gallery_size < 2) throw ConfigError("gen_eval_cases: gallery_size >= 2");
  const std::size_t cells = synth.grid * synth.grid;
  if (cells < 2) throw ConfigError("gen_eval_cases: grid must have >= 2 cells");

  std::set<std::string> gallery_specs;    // every gallery spec so far
  std::set<std::string> reference_specs;  // every reference so far
  const Vocabulary& vocab = Vocabulary::Get();
  std::vector<CirEvalCase> out;
  out.reserve(n);
  constexpr int kMaxAttempts = 1000;
  constexpr int kKindAttempts = 64;

  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(DeriveSeed(seed, {0xe7a1, i}));
    CirEvalCase ec;
    ec.query_id = Numbered('q', i, 5);
    ec.reference_id = ec.query_id + "_ref";

    int attempts = 0;
    for (;; ++attempts) {
      if (attempts == kMaxAttempts) {
        throw DataError("gen_eval_cases: could not draw a unique target");
      }
      ec.reference = RandomSpec(synth, rng);
      ec.modification.cell = rng.Below(cells);
      ec.modification.value =
          RandomCellExcept(rng, {Cell{}, ec.reference.cells[ec.modification.cell]});
      ec.target = ec.reference;
      ec.target.cells[ec.modification.cell] = ec.modification.value;
      if (!gallery_specs.contains(ec.target.Encode()) &&
          !gallery_specs.contains(ec.reference.Encode()) &&
          !reference_specs.contains(ec.target.Encode())) {
        break;
      }
    }
    ec.modification_text = ModificationText(ec.modification, synth.grid);
    ec.modification_ids = vocab.Tokenize(ec.modification_text);

    std::size_t copies = 1;
    if (gallery_size >= 3 && rng.Uniform() < synth.multi_gt_fraction) {
      copies = std::min<std::size_t>(2 + rng.Below(3), gallery_size - 1);
      ec.multi_ground_truth = true;
    }
    std::set<std::string> local = {ec.target.Encode()};
    std::vector<AttributeSpec> distractors;
    const std::string ref_code = ec.reference.Encode();
    // Hard negatives cycle over kinds 0..2; a kind that keeps colliding is
    // retired, and kind 3 (random) is the last resort.
    bool exhausted[kNumHardKinds] = {};
    for (std::size_t k = 0; distractors.size() < gallery_size - copies; ++k) {
      int kind = kRandomKind;
      for (int step = 0; step < kNumHardKinds; ++step) {
        const int cand = static_cast<int>((k + step) % kNumHardKinds);
        if (!exhausted[cand]) {
          kind = cand;
          break;
        }
      }
      AttributeSpec d;
      bool ok = false;
      const int budget = kind == kRandomKind ? kMaxAttempts : kKindAttempts;
      for (int a = 0; a < budget && !ok; ++a) {
        d = DrawDistractor(kind, ec.reference, ec.target, ec.modification,
                           synth, rng);
        const std::string code = d.Encode();
        ok = code != ref_code && !local.contains(code) &&
             !gallery_specs.contains(code) && !reference_specs.contains(code);
      }
      if (!ok) {
        if (kind == kRandomKind) {
          throw DataError("gen_eval_cases: could not draw a distractor");
        }
        exhausted[kind] = true;
        continue;
      }
      local.insert(d.Encode());
      distractors.push_back(std::move(d));
    }

    // Gallery slots 0..copies-1 are targets; shuffle then name.
    std::vector<AttributeSpec> items(copies, ec.target);
    items.insert(items.end(), distractors.begin(), distractors.end());
    const std::vector<std::size_t> order = rng.Permutation(items.size());
    std::vector<std::string> distractor_ids;
    for (std::size_t slot = 0; slot < order.size(); ++slot) {
      GalleryItem item;
      item.id = ec.query_id + "_" + Numbered('g', slot, 3);
      item.spec = items[order[slot]];
      if (order[slot] < copies) {
        ec.ground_truth_ids.push_back(item.id);
      } else {
        distractor_ids.push_back(item.id);
      }
      ec.gallery.push_back(std::move(item));
    }
    ec.subset_ids = ec.ground_truth_ids;
    const std::vector<std::size_t> pick = rng.Permutation(distractor_ids.size());
    for (std::size_t j = 0;
         j < pick.size() && ec.subset_ids.size() < synth.subset_size; ++j) {
      ec.subset_ids.push_back(distractor_ids[pick[j]]);
    }
    std::sort(ec.subset_ids.begin(), ec.subset_ids.end());

    for (const GalleryItem& g : ec.gallery) gallery_specs.insert(g.spec.Encode());
    reference_specs.insert(ref_code);
    out.push_back(std::move(ec));
  }
  return out;
}

}  // namespace mcir
