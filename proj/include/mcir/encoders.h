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

// Dual encoder: a patch transformer for images and a token transformer for
// text, both ending in a projection to the shared embedding dimension.
//
// One image tower encodes both the masked query image and the full target
// image. Blocks are pre-norm:
//   x += Attention(LayerNorm(x));  x += MLP(LayerNorm(x))
// Images pool at a prepended class token, text pools at its final token.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mcir/tensor.h"

namespace mcir {

struct EncoderConfig {
  std::size_t image_size = 32;
  std::size_t patch_size = 8;
  std::size_t channels = 1;
  std::size_t embed_dim = 64;
  std::size_t num_layers = 2;
  std::size_t num_heads = 2;
  double mlp_ratio = 2.0;
  std::size_t vocab_size = 64;
  std::size_t max_text_len = 24;
  std::uint64_t seed = 7;

  // Throws ConfigError on an inconsistent configuration.
  void Validate() const;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t patch_dim() const { return channels * patch_size * patch_size; }
  std::size_t mlp_dim() const;
};

constexpr double kLayerNormEps = 1e-5;

// Decides weight decay: norm parameters and position embeddings are not
// decayed.
enum class ParamKind { kMatrix, kBias, kEmbedding, kNorm, kPosition };

inline bool IsDecayed(ParamKind kind) {
  return kind != ParamKind::kNorm && kind != ParamKind::kPosition;
}

struct BlockParams {
  Tensor ln1_gamma, ln1_beta;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gamma, ln2_beta;
  Tensor w1, b1, w2, b2;
};

struct TowerParams {
  std::vector<BlockParams> blocks;
  Tensor final_gamma, final_beta;
  Tensor projection;  // [d x d], no bias
};

using ParamVisitor =
    std::function<void(const std::string& name, Tensor& tensor, ParamKind)>;

struct DualEncoderParams {
  // Image tower.
  Tensor patch_projection;  // [patch_dim x d], no bias
  Tensor image_positions;   // [(num_patches + 1) x d]; last row: class slot
  Tensor class_token;       // [1 x d]
  TowerParams image;
  // Text tower.
  Tensor token_embedding;   // [vocab_size x d]
  Tensor text_positions;    // [max_text_len x d]
  TowerParams text;

  // Visits every tensor in a fixed order; names are stable and used as
  // checkpoint record names.
  void ForEach(const ParamVisitor& visit);
  void ForEach(const std::function<void(const std::string&, const Tensor&,
                                        ParamKind)>& visit) const;

  std::size_t NumParameters() const;
  // Independent copy of every tensor.
  DualEncoderParams Clone() const;
  void ZeroGrad();
};

// Deterministic in config.seed. Matrices ~ N(0, 1/fan_in); embeddings and
// positions ~ N(0, 0.02^2); layer-norm gains 1; biases 0.
DualEncoderParams InitParams(const EncoderConfig& config);

// Tokens of an image in original patch coordinates. `embeddings` row j
// belongs to patch indices[j].
struct PatchTokenSequence {
  std::vector<std::size_t> indices;
  Tensor embeddings;  // [indices.size() x d]

  std::size_t size() const { return indices.size(); }
};

// Patch pixels of a [channels x H x W] image as a [num_patches x patch_dim]
// matrix. Patches are numbered row-major over the patch grid; each row is
// flattened channel-major, then row, then column.
Tensor PatchPixels(const Tensor& image, const EncoderConfig& config);

// Token i = PatchPixels row i * patch_projection + image_positions row i.
PatchTokenSequence PatchEmbed(Tape& tape, const Tensor& image,
                              const DualEncoderParams& params,
                              const EncoderConfig& config);

// Feature [d] of a (possibly partial) token sequence. Tokens are processed
// in ascending index order whatever their storage order.
Tensor EncodeImage(Tape& tape, const PatchTokenSequence& tokens,
                   const DualEncoderParams& params,
                   const EncoderConfig& config);

// Convenience: PatchEmbed then EncodeImage on every patch.
Tensor EncodeFullImage(Tape& tape, const Tensor& image,
                       const DualEncoderParams& params,
                       const EncoderConfig& config);

// Feature [d] of a token id sequence, pooled at the final token. Throws
// InputError for an out-of-vocabulary id, an empty sequence, or one longer
// than max_text_len (no silent truncation).
Tensor EncodeText(Tape& tape, std::span<const int> token_ids,
                  const DualEncoderParams& params,
                  const EncoderConfig& config);

}  // namespace mcir
