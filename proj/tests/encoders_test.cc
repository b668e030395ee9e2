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

#include <gtest/gtest.h>

#include <random>

#include "mcir/errors.h"
#include "mcir/retrieval.h"
#include "test_util.h"

namespace mcir {
namespace {

EncoderConfig Tiny() {
  EncoderConfig c;
  c.image_size = 16;
  c.patch_size = 8;
  c.embed_dim = 4;
  c.num_layers = 1;
  c.num_heads = 1;
  c.vocab_size = 10;
  c.max_text_len = 6;
  return c;
}

Tensor RandomImage(const EncoderConfig& c, std::mt19937_64& gen) {
  return testing::RandomTensor({c.channels, c.image_size, c.image_size}, gen,
                               false);
}

TEST(EncoderConfigTest, RejectsInconsistentShapes) {
  EncoderConfig c = Tiny();
  c.patch_size = 5;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = Tiny();
  c.num_heads = 3;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = Tiny();
  c.num_layers = 0;
  EXPECT_THROW(c.Validate(), ConfigError);
}

TEST(PatchEmbedTest, CountsTokens) {
  const EncoderConfig c = Tiny();
  const DualEncoderParams p = InitParams(c);
  std::mt19937_64 gen(1);
  Tape tape(false);
  const PatchTokenSequence seq = PatchEmbed(tape, RandomImage(c, gen), p, c);
  ASSERT_EQ(seq.size(), 4u);
  EXPECT_EQ(seq.indices, (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_EQ(seq.embeddings.shape(), (Shape{4, 4}));
}

TEST(PatchEmbedTest, ZeroImageGivesPositions) {
  const EncoderConfig c = Tiny();
  const DualEncoderParams p = InitParams(c);
  Tape tape(false);
  const PatchTokenSequence seq =
      PatchEmbed(tape, Tensor::Zeros({1, 16, 16}), p, c);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_EQ(seq.embeddings.data()[i], p.image_positions.data()[i]);
  }
}

TEST(PatchEmbedTest, TokenMatchesHandSlicedPatch) {
  EncoderConfig c = Tiny();
  c.channels = 2;
  const DualEncoderParams p = InitParams(c);
  std::mt19937_64 gen(2);
  const Tensor image = RandomImage(c, gen);
  Tape tape(false);
  const PatchTokenSequence seq = PatchEmbed(tape, image, p, c);
  // Patch 2 is grid row 1, column 0.
  std::vector<double> flat;
  for (std::size_t ch = 0; ch < 2; ++ch)
    for (std::size_t y = 8; y < 16; ++y)
      for (std::size_t x = 0; x < 8; ++x)
        flat.push_back(image.data()[(ch * 16 + y) * 16 + x]);
  const testing::Mat proj = testing::ToMat(p.patch_projection);
  for (std::size_t j = 0; j < 4; ++j) {
    double want = p.image_positions.data()[2 * 4 + j];
    for (std::size_t i = 0; i < flat.size(); ++i) want += flat[i] * proj[i][j];
    EXPECT_NEAR(seq.embeddings.data()[2 * 4 + j], want, 1e-12);
  }
}

TEST(PatchEmbedTest, RejectsWrongImageShape) {
  const EncoderConfig c = Tiny();
  const DualEncoderParams p = InitParams(c);
  Tape tape;
  EXPECT_THROW(PatchEmbed(tape, Tensor::Zeros({1, 8, 8}), p, c), ShapeError);
}

TEST(EncodeImageTest, TokenOrderDoesNotMatter) {
  EncoderConfig c = Tiny();
  c.embed_dim = 8;
  c.num_heads = 2;
  const DualEncoderParams p = InitParams(c);
  std::mt19937_64 gen(3);
  Tape tape(false);
  const PatchTokenSequence seq = PatchEmbed(tape, RandomImage(c, gen), p, c);
  const std::vector<std::size_t> perm = {2, 0, 3, 1};
  PatchTokenSequence shuffled;
  for (std::size_t i : perm) shuffled.indices.push_back(seq.indices[i]);
  shuffled.embeddings = tape.GatherRows(seq.embeddings, perm);
  const Tensor a = EncodeImage(tape, seq, p, c);
  const Tensor b = EncodeImage(tape, shuffled, p, c);
  EXPECT_LE(testing::MaxAbsDiff(a.data(), b.data()), 1e-12);
}

TEST(EncodeImageTest, DroppedTokensChangeFeature) {
  EncoderConfig c = Tiny();
  c.image_size = 32;
  const DualEncoderParams p = InitParams(c);
  std::mt19937_64 gen(4);
  Tape tape(false);
  const PatchTokenSequence seq = PatchEmbed(tape, RandomImage(c, gen), p, c);
  PatchTokenSequence kept;
  const std::vector<std::size_t> rows = {1, 6, 9, 14};
  kept.indices = rows;
  kept.embeddings = tape.GatherRows(seq.embeddings, rows);
  const Tensor full = EncodeImage(tape, seq, p, c);
  const Tensor part = EncodeImage(tape, kept, p, c);
  EXPECT_GT(testing::MaxAbsDiff(full.data(), part.data()), 1e-6);
}

TEST(EncodeImageTest, MatchesScalarLoopOracle) {
  const EncoderConfig c = Tiny();
  const DualEncoderParams p = InitParams(c);
  std::mt19937_64 gen(5);
  const Tensor image = RandomImage(c, gen);
  Tape tape(false);
  const Tensor feature = EncodeFullImage(tape, image, p, c);

  const Tensor pixels = PatchPixels(image, c);
  const testing::Mat px = testing::ToMat(pixels);
  const testing::Mat emb = testing::MatMulLoop(px, testing::ToMat(p.patch_projection));
  const testing::Mat pos = testing::ToMat(p.image_positions);
  testing::Mat x;
  std::vector<double> cls(4);
  for (std::size_t j = 0; j < 4; ++j) cls[j] = p.class_token.data()[j] + pos[4][j];
  x.push_back(cls);
  for (std::size_t i = 0; i < 4; ++i) {
    std::vector<double> row(4);
    for (std::size_t j = 0; j < 4; ++j) row[j] = emb[i][j] + pos[i][j];
    x.push_back(row);
  }
  const std::vector<double> want =
      testing::TowerLoop(x, 0, p.image, 1, kLayerNormEps);
  EXPECT_LE(testing::MaxAbsDiff(feature.data(), want), 1e-10);
}

TEST(EncodeTextTest, MatchesScalarLoopOracle) {
  const EncoderConfig c = Tiny();
  const DualEncoderParams p = InitParams(c);
  const std::vector<int> ids = {3, 1, 4, 1};
  Tape tape(false);
  const Tensor feature = EncodeText(tape, ids, p, c);
  const testing::Mat tok = testing::ToMat(p.token_embedding);
  const testing::Mat pos = testing::ToMat(p.text_positions);
  testing::Mat x;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::vector<double> row(4);
    for (std::size_t j = 0; j < 4; ++j) row[j] = tok[ids[i]][j] + pos[i][j];
    x.push_back(row);
  }
  const std::vector<double> want =
      testing::TowerLoop(x, ids.size() - 1, p.text, 1, kLayerNormEps);
  EXPECT_LE(testing::MaxAbsDiff(feature.data(), want), 1e-10);
}

TEST(EncodeTextTest, MultiHeadMatchesScalarLoopOracle) {
  EncoderConfig c = Tiny();
  c.embed_dim = 8;
  c.num_heads = 2;
  c.num_layers = 2;
  const DualEncoderParams p = InitParams(c);
  const std::vector<int> ids = {2, 7, 5};
  Tape tape(false);
  const Tensor feature = EncodeText(tape, ids, p, c);
  const testing::Mat tok = testing::ToMat(p.token_embedding);
  const testing::Mat pos = testing::ToMat(p.text_positions);
  testing::Mat x;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::vector<double> row(8);
    for (std::size_t j = 0; j < 8; ++j) row[j] = tok[ids[i]][j] + pos[i][j];
    x.push_back(row);
  }
  const std::vector<double> want =
      testing::TowerLoop(x, ids.size() - 1, p.text, 2, kLayerNormEps);
  EXPECT_LE(testing::MaxAbsDiff(feature.data(), want), 1e-10);
}

TEST(EncodeTextTest, DeterministicAndSensitiveToLastToken) {
  const EncoderConfig c = Tiny();
  const DualEncoderParams p = InitParams(c);
  const std::vector<int> a = {1, 2, 3}, b = {1, 2, 4};
  const std::vector<double> fa = TextFeature(a, p, c);
  EXPECT_EQ(fa, TextFeature(a, p, c));
  EXPECT_GT(testing::MaxAbsDiff(fa, TextFeature(b, p, c)), 1e-6);
}

TEST(EncodeTextTest, RejectsBadSequences) {
  const EncoderConfig c = Tiny();
  const DualEncoderParams p = InitParams(c);
  Tape tape;
  EXPECT_THROW(EncodeText(tape, std::vector<int>{}, p, c), InputError);
  EXPECT_THROW(EncodeText(tape, std::vector<int>{10}, p, c), InputError);
  EXPECT_THROW(EncodeText(tape, std::vector<int>{-1}, p, c), InputError);
  EXPECT_THROW(EncodeText(tape, std::vector<int>(7, 1), p, c), InputError);
}

TEST(InitParamsTest, SeedDeterminism) {
  const EncoderConfig c = Tiny();
  const DualEncoderParams a = InitParams(c), b = InitParams(c);
  std::vector<double> va, vb;
  a.ForEach([&](const std::string&, const Tensor& t, ParamKind) {
    va.insert(va.end(), t.data().begin(), t.data().end());
  });
  b.ForEach([&](const std::string&, const Tensor& t, ParamKind) {
    vb.insert(vb.end(), t.data().begin(), t.data().end());
  });
  EXPECT_EQ(va, vb);
  EncoderConfig other = c;
  other.seed = c.seed + 1;
  std::vector<double> vc;
  InitParams(other).ForEach([&](const std::string&, const Tensor& t, ParamKind) {
    vc.insert(vc.end(), t.data().begin(), t.data().end());
  });
  EXPECT_NE(va, vc);
}

TEST(InitParamsTest, ParameterCountClosedForm) {
  for (std::size_t layers : {1u, 3u}) {
    EncoderConfig c;
    c.num_layers = layers;
    const std::size_t d = c.embed_dim, h = c.mlp_dim(), L = c.num_layers;
    const std::size_t block = 2 * d + 4 * (d * d + d) + 2 * d + d * h + h + h * d + d;
    const std::size_t tower = L * block + 2 * d + d * d;
    const std::size_t image =
        c.patch_dim() * d + (c.num_patches() + 1) * d + d + tower;
    const std::size_t text = c.vocab_size * d + c.max_text_len * d + tower;
    EXPECT_EQ(InitParams(c).NumParameters(), image + text);
  }
}

}  // namespace
}  // namespace mcir
