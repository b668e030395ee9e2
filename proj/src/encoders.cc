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

#include "mcir/encoders.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mcir/errors.h"
#include "mcir/rng.h"

namespace mcir {

void EncoderConfig::Validate() const {
  auto fail = [](const std::string& what) {
    throw ConfigError("encoder config: " + what);
  };
  if (image_size == 0 || patch_size == 0 || channels == 0) {
    fail("image_size, patch_size and channels must be positive");
  }
  if (image_size % patch_size != 0) {
    fail("image_size " + std::to_string(image_size) +
         " is not divisible by patch_size " + std::to_string(patch_size));
  }
  if (embed_dim == 0 || num_layers == 0 || num_heads == 0) {
    fail("embed_dim, num_layers and num_heads must be positive");
  }
  if (embed_dim % num_heads != 0) {
    fail("embed_dim " + std::to_string(embed_dim) +
         " is not divisible by num_heads " + std::to_string(num_heads));
  }
  if (!(mlp_ratio > 0.0) || mlp_dim() == 0) fail("mlp_ratio must be positive");
  if (vocab_size == 0 || max_text_len == 0) {
    fail("vocab_size and max_text_len must be positive");
  }
}

std::size_t EncoderConfig::mlp_dim() const {
  return static_cast<std::size_t>(
      std::llround(mlp_ratio * static_cast<double>(embed_dim)));
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

void VisitTower(const std::string& prefix, TowerParams& tower,
                const ParamVisitor& visit) {
  for (std::size_t l = 0; l < tower.blocks.size(); ++l) {
    BlockParams& b = tower.blocks[l];
    const std::string p = prefix + ".block" + std::to_string(l) + ".";
    visit(p + "ln1.gamma", b.ln1_gamma, ParamKind::kNorm);
    visit(p + "ln1.beta", b.ln1_beta, ParamKind::kNorm);
    visit(p + "attn.wq", b.wq, ParamKind::kMatrix);
    visit(p + "attn.bq", b.bq, ParamKind::kBias);
    visit(p + "attn.wk", b.wk, ParamKind::kMatrix);
    visit(p + "attn.bk", b.bk, ParamKind::kBias);
    visit(p + "attn.wv", b.wv, ParamKind::kMatrix);
    visit(p + "attn.bv", b.bv, ParamKind::kBias);
    visit(p + "attn.wo", b.wo, ParamKind::kMatrix);
    visit(p + "attn.bo", b.bo, ParamKind::kBias);
    visit(p + "ln2.gamma", b.ln2_gamma, ParamKind::kNorm);
    visit(p + "ln2.beta", b.ln2_beta, ParamKind::kNorm);
    visit(p + "mlp.w1", b.w1, ParamKind::kMatrix);
    visit(p + "mlp.b1", b.b1, ParamKind::kBias);
    visit(p + "mlp.w2", b.w2, ParamKind::kMatrix);
    visit(p + "mlp.b2", b.b2, ParamKind::kBias);
  }
  visit(prefix + ".final.gamma", tower.final_gamma, ParamKind::kNorm);
  visit(prefix + ".final.beta", tower.final_beta, ParamKind::kNorm);
  visit(prefix + ".projection", tower.projection, ParamKind::kMatrix);
}

TowerParams MakeTower(const EncoderConfig& c) {
  const std::size_t d = c.embed_dim, h = c.mlp_dim();
  auto z = [](Shape s) { return Tensor::Zeros(std::move(s), true); };
  TowerParams t;
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    t.blocks.push_back(BlockParams{
        z({d}), z({d}),                          // ln1
        z({d, d}), z({d}), z({d, d}), z({d}),    // q, k
        z({d, d}), z({d}), z({d, d}), z({d}),    // v, o
        z({d}), z({d}),                          // ln2
        z({d, h}), z({h}), z({h, d}), z({d})});  // mlp
  }
  t.final_gamma = z({d});
  t.final_beta = z({d});
  t.projection = z({d, d});
  return t;
}

}  // namespace

void DualEncoderParams::ForEach(const ParamVisitor& visit) {
  visit("image.patch_projection", patch_projection, ParamKind::kMatrix);
  visit("image.positions", image_positions, ParamKind::kPosition);
  visit("image.class_token", class_token, ParamKind::kEmbedding);
  VisitTower("image", image, visit);
  visit("text.token_embedding", token_embedding, ParamKind::kEmbedding);
  visit("text.positions", text_positions, ParamKind::kPosition);
  VisitTower("text", text, visit);
}

void DualEncoderParams::ForEach(
    const std::function<void(const std::string&, const Tensor&, ParamKind)>&
        visit) const {
  const_cast<DualEncoderParams*>(this)->ForEach(
      [&](const std::string& name, Tensor& t, ParamKind kind) {
        visit(name, t, kind);
      });
}

std::size_t DualEncoderParams::NumParameters() const {
  std::size_t n = 0;
  ForEach([&](const std::string&, const Tensor& t, ParamKind) {
    n += t.numel();
  });
  return n;
}

DualEncoderParams DualEncoderParams::Clone() const {
  DualEncoderParams copy = *this;
  copy.ForEach([](const std::string&, Tensor& t, ParamKind) { t = t.Clone(); });
  return copy;
}

void DualEncoderParams::ZeroGrad() {
  ForEach([](const std::string&, Tensor& t, ParamKind) { t.ZeroGrad(); });
}

DualEncoderParams InitParams(const EncoderConfig& config) {
  config.Validate();
  const std::size_t d = config.embed_dim;
  DualEncoderParams p;
  p.patch_projection = Tensor::Zeros({config.patch_dim(), d}, true);
  p.image_positions = Tensor::Zeros({config.num_patches() + 1, d}, true);
  p.class_token = Tensor::Zeros({1, d}, true);
  p.image = MakeTower(config);
  p.token_embedding = Tensor::Zeros({config.vocab_size, d}, true);
  p.text_positions = Tensor::Zeros({config.max_text_len, d}, true);
  p.text = MakeTower(config);

  Rng rng(DeriveSeed(config.seed, {0x1417}));
  p.ForEach([&](const std::string& name, Tensor& t, ParamKind kind) {
    auto data = t.mutable_data();
    switch (kind) {
      case ParamKind::kMatrix: {
        const double sd = 1.0 / std::sqrt(static_cast<double>(t.shape()[0]));
        for (double& v : data) v = sd * rng.Normal();
        break;
      }
      case ParamKind::kEmbedding:
      case ParamKind::kPosition:
        for (double& v : data) v = 0.02 * rng.Normal();
        break;
      case ParamKind::kNorm:
        if (name.ends_with("gamma")) std::fill(data.begin(), data.end(), 1.0);
        break;
      case ParamKind::kBias:
        break;
    }
  });
  return p;
}

// ---------------------------------------------------------------------------
// Forward passes

namespace {

Tensor Block(Tape& tape, const Tensor& x, const BlockParams& b,
             const EncoderConfig& c) {
  const std::size_t d = c.embed_dim, heads = c.num_heads, dh = d / heads;
  const Tensor h = tape.LayerNorm(x, b.ln1_gamma, b.ln1_beta, kLayerNormEps);
  const Tensor q = tape.AddRowVector(tape.MatMul(h, b.wq), b.bq);
  const Tensor k = tape.AddRowVector(tape.MatMul(h, b.wk), b.bk);
  const Tensor v = tape.AddRowVector(tape.MatMul(h, b.wv), b.bv);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> head_out;
  head_out.reserve(heads);
  for (std::size_t i = 0; i < heads; ++i) {
    const Tensor qh = heads == 1 ? q : tape.SliceCols(q, i * dh, dh);
    const Tensor kh = heads == 1 ? k : tape.SliceCols(k, i * dh, dh);
    const Tensor vh = heads == 1 ? v : tape.SliceCols(v, i * dh, dh);
    const Tensor scores = tape.Scale(tape.MatMul(qh, tape.Transpose(kh)), scale);
    head_out.push_back(tape.MatMul(tape.Softmax(scores), vh));
  }
  const Tensor attn = heads == 1 ? head_out[0] : tape.ConcatCols(head_out);
  Tensor y = tape.Add(x, tape.AddRowVector(tape.MatMul(attn, b.wo), b.bo));

  const Tensor h2 = tape.LayerNorm(y, b.ln2_gamma, b.ln2_beta, kLayerNormEps);
  const Tensor m = tape.Gelu(tape.AddRowVector(tape.MatMul(h2, b.w1), b.b1));
  return tape.Add(y, tape.AddRowVector(tape.MatMul(m, b.w2), b.b2));
}

// Runs the blocks and returns the projected feature at row `pool_row`.
Tensor Tower(Tape& tape, Tensor x, std::size_t pool_row, const TowerParams& t,
             const EncoderConfig& c) {
  for (const BlockParams& b : t.blocks) x = Block(tape, x, b, c);
  const std::size_t d = c.embed_dim;
  const Tensor pooled = tape.Reshape(tape.Row(x, pool_row), {1, d});
  const Tensor normed =
      tape.LayerNorm(pooled, t.final_gamma, t.final_beta, kLayerNormEps);
  return tape.Reshape(tape.MatMul(normed, t.projection), {d});
}

}  // namespace

Tensor PatchPixels(const Tensor& image, const EncoderConfig& config) {
  const std::size_t s = config.image_size, p = config.patch_size,
                    ch = config.channels, g = config.grid();
  if (image.shape() != Shape{ch, s, s}) {
    throw ShapeError("image must be " + ShapeToString({ch, s, s}) + ", got " +
                     ShapeToString(image.shape()));
  }
  std::vector<double> out(config.num_patches() * config.patch_dim());
  auto px = image.data();
  std::size_t o = 0;
  for (std::size_t pr = 0; pr < g; ++pr) {
    for (std::size_t pc = 0; pc < g; ++pc) {
      for (std::size_t c = 0; c < ch; ++c) {
        for (std::size_t y = 0; y < p; ++y) {
          for (std::size_t x = 0; x < p; ++x) {
            out[o++] = px[(c * s + pr * p + y) * s + pc * p + x];
          }
        }
      }
    }
  }
  return Tensor::FromData({config.num_patches(), config.patch_dim()},
                          std::move(out));
}

PatchTokenSequence PatchEmbed(Tape& tape, const Tensor& image,
                              const DualEncoderParams& params,
                              const EncoderConfig& config) {
  const Tensor pixels = PatchPixels(image, config);
  PatchTokenSequence seq;
  seq.indices.resize(config.num_patches());
  std::iota(seq.indices.begin(), seq.indices.end(), std::size_t{0});
  seq.embeddings =
      tape.Add(tape.MatMul(pixels, params.patch_projection),
               tape.GatherRows(params.image_positions, seq.indices));
  return seq;
}

Tensor EncodeImage(Tape& tape, const PatchTokenSequence& tokens,
                   const DualEncoderParams& params,
                   const EncoderConfig& config) {
  if (tokens.size() == 0) {
    throw DegenerateInputError("encode_image: empty token sequence");
  }
  if (tokens.embeddings.rows() != tokens.size() ||
      tokens.embeddings.cols() != config.embed_dim) {
    throw ShapeError("encode_image: embeddings " +
                     ShapeToString(tokens.embeddings.shape()) + " for " +
                     std::to_string(tokens.size()) + " tokens");
  }
  for (std::size_t idx : tokens.indices) {
    if (idx >= config.num_patches()) {
      throw BoundsError("encode_image: patch index " + std::to_string(idx) +
                        " out of range");
    }
  }
  Tensor body = tokens.embeddings;
  if (!std::is_sorted(tokens.indices.begin(), tokens.indices.end())) {
    std::vector<std::size_t> order(tokens.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return tokens.indices[a] < tokens.indices[b];
    });
    body = tape.GatherRows(tokens.embeddings, order);
  }
  const std::size_t class_slot = config.num_patches();
  const Tensor cls = tape.Add(
      params.class_token,
      tape.GatherRows(params.image_positions,
                      std::span<const std::size_t>(&class_slot, 1)));
  const Tensor parts[] = {cls, body};
  return Tower(tape, tape.ConcatRows(parts), 0, params.image, config);
}

Tensor EncodeFullImage(Tape& tape, const Tensor& image,
                       const DualEncoderParams& params,
                       const EncoderConfig& config) {
  return EncodeImage(tape, PatchEmbed(tape, image, params, config), params,
                     config);
}

Tensor EncodeText(Tape& tape, std::span<const int> token_ids,
                  const DualEncoderParams& params,
                  const EncoderConfig& config) {
  if (token_ids.empty()) throw InputError("encode_text: empty token sequence");
  if (token_ids.size() > config.max_text_len) {
    throw InputError("encode_text: sequence of " +
                     std::to_string(token_ids.size()) +
                     " tokens exceeds max_text_len " +
                     std::to_string(config.max_text_len));
  }
  std::vector<std::size_t> ids(token_ids.size());
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    const int id = token_ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size) {
      throw InputError("encode_text: token id " + std::to_string(id) +
                       " outside vocabulary of " +
                       std::to_string(config.vocab_size));
    }
    ids[i] = static_cast<std::size_t>(id);
  }
  std::vector<std::size_t> positions(ids.size());
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  const Tensor x = tape.Add(tape.GatherRows(params.token_embedding, ids),
                            tape.GatherRows(params.text_positions, positions));
  return Tower(tape, x, ids.size() - 1, params.text, config);
}

}  // namespace mcir
