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

#include <gtest/gtest.h>

#include <cstring>

#include "mcir/checkpoint.h"
#include "mcir/config.h"
#include "mcir/container.h"
#include "mcir/errors.h"
#include "test_util.h"

namespace mcir {
namespace {

EncoderConfig Small() {
  EncoderConfig c;
  c.embed_dim = 8;
  c.num_layers = 1;
  return c;
}

Container Sample() {
  Container c;
  Section t{"weights", SectionKind::kTensors, {}, {}};
  t.tensors.push_back(TensorRecord::From("a", Tensor::FromData({2, 2}, {1, 2, 3, 4})));
  t.tensors.push_back(TensorRecord::From("b", Tensor::Scalar(0.1)));
  c.Add(t);
  c.Add(Section{"meta", SectionKind::kStrings, {}, {"k=v", "x=1"}});
  return c;
}

void StoreChecksum(std::vector<std::uint8_t>& bytes) {
  const std::size_t body = bytes.size() - 8;
  const std::uint64_t h = Fnv1a64(std::span(bytes).first(body));
  std::memcpy(bytes.data() + body, &h, 8);
}

TEST(Fnv1aTest, KnownVectors) {
  EXPECT_EQ(Fnv1a64({}), 0xcbf29ce484222325ULL);
  const std::uint8_t a[] = {'a'};
  EXPECT_EQ(Fnv1a64(a), 0xaf63dc4c8601ec8cULL);
  const std::uint8_t foobar[] = {'f', 'o', 'o', 'b', 'a', 'r'};
  EXPECT_EQ(Fnv1a64(foobar), 0x85944171f73967e8ULL);
}

TEST(ContainerTest, RoundTrip) {
  const Container c = Sample();
  const std::vector<std::uint8_t> bytes = c.Serialize();
  const Container back = Container::Parse(bytes);
  EXPECT_EQ(back.sections(), c.sections());
  EXPECT_EQ(back.Serialize(), bytes);
  EXPECT_FLOAT_EQ(back.Get("weights").FindTensor("b").values[0], 0.1f);
  EXPECT_THROW(back.Get("nope"), DataError);
  EXPECT_THROW(back.Get("weights").FindTensor("nope"), DataError);
}

TEST(ContainerTest, EveryFlippedByteIsDetected) {
  const std::vector<std::uint8_t> bytes = Sample().Serialize();
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    std::vector<std::uint8_t> bad = bytes;
    bad[i] ^= 0x40;
    EXPECT_THROW(Container::Parse(bad), DataError) << "byte " << i;
  }
}

TEST(ContainerTest, TruncationIsDetected) {
  const std::vector<std::uint8_t> bytes = Sample().Serialize();
  for (std::size_t n : {std::size_t{0}, std::size_t{3}, std::size_t{19},
                        bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(Container::Parse(std::span(bytes).first(n)), DataError) << n;
  }
}

TEST(ContainerTest, VersionAndBoundsChecks) {
  std::vector<std::uint8_t> bytes = Sample().Serialize();
  bytes[4] = 9;
  StoreChecksum(bytes);
  EXPECT_THROW(Container::Parse(bytes), DataError);

  // First section offset pointing past the end, with a valid checksum.
  bytes = Sample().Serialize();
  const std::size_t offset_at = 12 + 4 + std::strlen("weights");
  const std::uint64_t huge = bytes.size() * 2;
  std::memcpy(bytes.data() + offset_at, &huge, 8);
  StoreChecksum(bytes);
  EXPECT_THROW(Container::Parse(bytes), DataError);
}

TEST(ContainerTest, MissingFileIsIoError) {
  EXPECT_THROW(Container::Load("/nonexistent/x.mcir"), IoError);
}

TEST(KeyValuesTest, Parses) {
  const std::vector<std::string> lines = {"a=1", "b=x=y"};
  const auto kv = ParseKeyValues(lines);
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv[1].second, "x=y");
  const std::vector<std::string> bad = {"novalue"};
  EXPECT_THROW(ParseKeyValues(bad), DataError);
}

TEST(CheckpointTest, SaveLoadSaveIsByteIdentical) {
  const std::filesystem::path dir = testing::ScratchDir("ckpt_roundtrip");
  Checkpoint ck;
  ck.encoder = Small();
  ck.mask_ratio = 0.5;
  ck.trained_steps = 12;
  ck.params = InitParams(ck.encoder);
  SaveCheckpoint(dir / "a.mcir", ck);
  const Checkpoint back = LoadCheckpoint(dir / "a.mcir");
  EXPECT_EQ(back.mask_ratio, 0.5);
  EXPECT_EQ(back.trained_steps, 12);
  EXPECT_EQ(back.encoder.embed_dim, 8u);
  EXPECT_FALSE(back.combiner.has_value());
  SaveCheckpoint(dir / "b.mcir", back);
  EXPECT_EQ(ReadFileBytes(dir / "a.mcir"), ReadFileBytes(dir / "b.mcir"));

  // Stored values are the f32 rounding of the parameters.
  std::vector<double> orig, loaded;
  ck.params.ForEach([&](const std::string&, const Tensor& t, ParamKind) {
    orig.insert(orig.end(), t.data().begin(), t.data().end());
  });
  back.params.ForEach([&](const std::string&, const Tensor& t, ParamKind) {
    loaded.insert(loaded.end(), t.data().begin(), t.data().end());
  });
  ASSERT_EQ(orig.size(), loaded.size());
  for (std::size_t i = 0; i < orig.size(); ++i) {
    EXPECT_EQ(loaded[i], static_cast<double>(static_cast<float>(orig[i])));
  }
}

TEST(CheckpointTest, CombinerSectionRoundTrips) {
  const std::filesystem::path dir = testing::ScratchDir("ckpt_combiner");
  Checkpoint ck;
  ck.encoder = Small();
  ck.params = InitParams(ck.encoder);
  ck.combiner = InitCombiner(8, CombinerConfig{});
  SaveCheckpoint(dir / "c.mcir", ck);
  const Checkpoint back = LoadCheckpoint(dir / "c.mcir");
  ASSERT_TRUE(back.combiner.has_value());
  EXPECT_EQ(back.combiner->hidden(), 16u);
  EXPECT_FLOAT_EQ(back.combiner->gate.item(), -2.0f);
  EXPECT_EQ(BackboneFingerprint(back.params),
            BackboneFingerprint(LoadCheckpoint(dir / "c.mcir").params));
}

TEST(CheckpointTest, CorruptFileIsDataError) {
  const std::filesystem::path dir = testing::ScratchDir("ckpt_corrupt");
  Checkpoint ck;
  ck.encoder = Small();
  ck.params = InitParams(ck.encoder);
  SaveCheckpoint(dir / "a.mcir", ck);
  std::vector<std::uint8_t> bytes = ReadFileBytes(dir / "a.mcir");
  bytes[bytes.size() / 2] ^= 1;
  WriteFileBytes(dir / "bad.mcir", bytes);
  EXPECT_THROW(LoadCheckpoint(dir / "bad.mcir"), DataError);
  bytes = ReadFileBytes(dir / "a.mcir");
  bytes[0] = 'X';
  WriteFileBytes(dir / "magic.mcir", bytes);
  EXPECT_THROW(LoadCheckpoint(dir / "magic.mcir"), DataError);
  // A valid container without the checkpoint sections.
  Sample().Save(dir / "other.mcir");
  EXPECT_THROW(LoadCheckpoint(dir / "other.mcir"), DataError);
}

TEST(IndexTest, RoundTrip) {
  const std::filesystem::path dir = testing::ScratchDir("index_roundtrip");
  const GalleryIndex index({"a", "b", "c"}, {1, 0, 0, 1, 1, 0, 0.5, 0.5, 2}, 3, 0.25);
  SaveIndex(dir / "i.mcir", index);
  const GalleryIndex back = LoadIndex(dir / "i.mcir");
  EXPECT_EQ(back.ids(), index.ids());
  EXPECT_EQ(back.dim(), 3u);
  EXPECT_EQ(back.mask_ratio(), 0.25);
  ASSERT_EQ(back.embeddings().size(), 9u);
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_NEAR(back.embeddings()[i], index.embeddings()[i], 1e-7);
  }
  SaveIndex(dir / "j.mcir", back);
  EXPECT_EQ(ReadFileBytes(dir / "i.mcir"), ReadFileBytes(dir / "j.mcir"));
}

TEST(FormatDoubleTest, ShortestRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5, 0.0, 123456789.0}) {
    EXPECT_EQ(std::stod(FormatDouble(v)), v);
  }
}

// --- run configuration ---

std::string ReadConfig(const std::string& name) {
  const std::vector<std::uint8_t> b =
      ReadFileBytes(std::filesystem::path(MCIR_SOURCE_DIR) / "configs" / name);
  return std::string(b.begin(), b.end());
}

TEST(RunConfigTest, ShippedConfigsParse) {
  const RunConfig d = RunConfig::Parse(ReadConfig("default.ini"));
  EXPECT_EQ(d.encoder.embed_dim, 64u);
  EXPECT_EQ(d.training.temperature, 0.1);
  EXPECT_EQ(d.training.mask.ratio, 0.75);
  EXPECT_EQ(d.data.gallery_size, 50u);
  EXPECT_FALSE(d.eval.inference_weight.has_value());
  const RunConfig s = RunConfig::Parse(ReadConfig("smoke.ini"));
  EXPECT_EQ(s.encoder.embed_dim, 16u);
}

TEST(RunConfigTest, RenderParseRoundTrip) {
  RunConfig c = RunConfig::Parse(ReadConfig("default.ini"));
  c.eval.inference_weight = 0.3;
  c.training.learning_rate = 1.0 / 3.0;
  c.paths.reports = "out/r";
  const std::string text = c.Render();
  const RunConfig back = RunConfig::Parse(text);
  EXPECT_EQ(back.Render(), text);
  EXPECT_EQ(back.eval.inference_weight, 0.3);
  EXPECT_EQ(back.training.learning_rate, 1.0 / 3.0);
  EXPECT_EQ(back.paths.reports, "out/r");
}

struct BadConfigCase {
  std::string name;
  std::string from;
  std::string to;
};

class BadConfigTest : public ::testing::TestWithParam<BadConfigCase> {};

TEST_P(BadConfigTest, Rejected) {
  std::string text = ReadConfig("default.ini");
  const BadConfigCase& c = GetParam();
  const std::size_t at = text.find(c.from);
  ASSERT_NE(at, std::string::npos) << c.from;
  text.replace(at, c.from.size(), c.to);
  EXPECT_THROW(RunConfig::Parse(text), ConfigError);
}

INSTANTIATE_TEST_SUITE_P(
    Cases, BadConfigTest,
    ::testing::Values(
        BadConfigCase{"UnknownKey", "[masking]", "[masking]\nbogus = 1"},
        BadConfigCase{"UnknownSection", "[masking]", "[bogus]\n[masking]"},
        BadConfigCase{"DuplicateSection", "[eval]", "[masking]\n[eval]"},
        BadConfigCase{"DuplicateKey", "[masking]", "[masking]\nratio = 0.5"},
        BadConfigCase{"RatioOne", "ratio = 0.75", "ratio = 1.0"},
        BadConfigCase{"NotANumber", "embed_dim = 64", "embed_dim = wide"},
        BadConfigCase{"GridMismatch", "patch_size = 8", "patch_size = 16"},
        BadConfigCase{"NoEquals", "[masking]", "[masking]\njunk"},
        BadConfigCase{"WeightOutOfRange", "inference_weight = auto",
                      "inference_weight = 1.0"},
        BadConfigCase{"TextTooShort", "max_text_len = 24", "max_text_len = 8"}),
    [](const ::testing::TestParamInfo<BadConfigCase>& info) {
      return info.param.name;
    });

TEST(RunConfigTest, KeyOutsideSection) {
  EXPECT_THROW(RunConfig::Parse("ratio = 0.5\n"), ConfigError);
}

TEST(RunConfigTest, MissingSection) {
  std::string text = ReadConfig("default.ini");
  text = text.substr(0, text.find("[paths]"));
  try {
    RunConfig::Parse(text);
    FAIL() << "parsed without [paths]";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("paths"), std::string::npos) << e.what();
  }
}

TEST(RunConfigTest, OverrideSeedChangesAllSeeds) {
  RunConfig a = RunConfig::Parse(ReadConfig("default.ini"));
  RunConfig b = a;
  a.OverrideSeed(1);
  b.OverrideSeed(2);
  EXPECT_NE(a.training.seed, b.training.seed);
  EXPECT_NE(a.training.mask.seed, b.training.mask.seed);
  EXPECT_NE(a.encoder.seed, b.encoder.seed);
}

}  // namespace
}  // namespace mcir
