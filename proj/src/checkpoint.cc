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

#include "mcir/checkpoint.h"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <set>

#include "mcir/errors.h"

namespace mcir {

namespace {

std::string KeyValue(const std::string& k, const std::string& v) {
  return k + "=" + v;
}

std::uint64_t ParseU64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw DataError("bad integer for '" + key + "': '" + v + "'");
  }
  return out;
}

double ParseF64(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) {
    throw DataError("bad number for '" + key + "': '" + v + "'");
  }
  return out;
}

// Replaces every tensor visited by ForEach with the same-named record.
template <typename Params>
void AssignFromSection(Params& params, const Section& s) {
  std::set<std::string> seen;
  params.ForEach([&](const std::string& name, Tensor& t, ParamKind) {
    const TensorRecord& rec = s.FindTensor(name);
    if (rec.shape != t.shape()) {
      throw DataError("tensor '" + name + "': stored shape " +
                      ShapeToString(rec.shape) + ", expected " +
                      ShapeToString(t.shape()));
    }
    t = rec.ToTensor();
    t.set_requires_grad(true);
    seen.insert(name);
  });
  for (const TensorRecord& rec : s.tensors) {
    if (!seen.contains(rec.name)) {
      throw DataError("section '" + s.name + "': unknown tensor '" + rec.name +
                      "'");
    }
  }
}

}  // namespace

std::string FormatDouble(double v) {
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

Section EncoderSection(const DualEncoderParams& params) {
  Section s;
  s.name = "encoder";
  s.kind = SectionKind::kTensors;
  params.ForEach([&](const std::string& name, const Tensor& t, ParamKind) {
    s.tensors.push_back(TensorRecord::From(name, t));
  });
  return s;
}

Section CombinerSection(const CombinerParams& params) {
  Section s;
  s.name = "combiner";
  s.kind = SectionKind::kTensors;
  params.ForEach([&](const std::string& name, const Tensor& t, ParamKind) {
    s.tensors.push_back(TensorRecord::From(name, t));
  });
  return s;
}

Container ToContainer(const Checkpoint& ckpt) {
  const EncoderConfig& e = ckpt.encoder;
  Section config;
  config.name = "config";
  config.kind = SectionKind::kStrings;
  config.strings = {
      KeyValue("image_size", std::to_string(e.image_size)),
      KeyValue("patch_size", std::to_string(e.patch_size)),
      KeyValue("channels", std::to_string(e.channels)),
      KeyValue("embed_dim", std::to_string(e.embed_dim)),
      KeyValue("num_layers", std::to_string(e.num_layers)),
      KeyValue("num_heads", std::to_string(e.num_heads)),
      KeyValue("mlp_ratio", FormatDouble(e.mlp_ratio)),
      KeyValue("vocab_size", std::to_string(e.vocab_size)),
      KeyValue("max_text_len", std::to_string(e.max_text_len)),
      KeyValue("seed", std::to_string(e.seed)),
      KeyValue("mask_ratio", FormatDouble(ckpt.mask_ratio)),
      KeyValue("trained_steps", std::to_string(ckpt.trained_steps)),
  };
  Container c;
  c.Add(std::move(config));
  c.Add(EncoderSection(ckpt.params));
  if (ckpt.combiner) c.Add(CombinerSection(*ckpt.combiner));
  return c;
}

Checkpoint FromContainer(const Container& c) {
  Checkpoint ckpt;
  EncoderConfig& e = ckpt.encoder;
  for (const auto& [k, v] : ParseKeyValues(c.Get("config").strings)) {
    if (k == "image_size") e.image_size = ParseU64(k, v);
    else if (k == "patch_size") e.patch_size = ParseU64(k, v);
    else if (k == "channels") e.channels = ParseU64(k, v);
    else if (k == "embed_dim") e.embed_dim = ParseU64(k, v);
    else if (k == "num_layers") e.num_layers = ParseU64(k, v);
    else if (k == "num_heads") e.num_heads = ParseU64(k, v);
    else if (k == "mlp_ratio") e.mlp_ratio = ParseF64(k, v);
    else if (k == "vocab_size") e.vocab_size = ParseU64(k, v);
    else if (k == "max_text_len") e.max_text_len = ParseU64(k, v);
    else if (k == "seed") e.seed = ParseU64(k, v);
    else if (k == "mask_ratio") ckpt.mask_ratio = ParseF64(k, v);
    else if (k == "trained_steps")
      ckpt.trained_steps = static_cast<std::int64_t>(ParseU64(k, v));
    else throw DataError("checkpoint config: unknown key '" + k + "'");
  }
  try {
    e.Validate();
  } catch (const ConfigError& err) {
    throw DataError(std::string("checkpoint config: ") + err.what());
  }
  ckpt.params = InitParams(e);
  AssignFromSection(ckpt.params, c.Get("encoder"));
  if (c.Has("combiner")) {
    const Section& s = c.Get("combiner");
    const Shape& w = s.FindTensor("combiner.image.weight").shape;
    if (w.size() != 2 || w[0] != e.embed_dim) {
      throw DataError("combiner does not match embed_dim " +
                      std::to_string(e.embed_dim));
    }
    CombinerConfig cc;
    cc.hidden = w[1];
    CombinerParams p = InitCombiner(e.embed_dim, cc);
    AssignFromSection(p, s);
    ckpt.combiner = std::move(p);
  }
  return ckpt;
}

void SaveCheckpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  ToContainer(ckpt).Save(path);
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  const Container c = Container::Load(path);
  try {
    return FromContainer(c);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

Container IndexToContainer(const GalleryIndex& index) {
  Section meta;
  meta.name = "index_meta";
  meta.kind = SectionKind::kStrings;
  meta.strings = {KeyValue("count", std::to_string(index.size())),
                  KeyValue("dim", std::to_string(index.dim())),
                  KeyValue("mask_ratio", FormatDouble(index.mask_ratio()))};
  Section ids;
  ids.name = "ids";
  ids.kind = SectionKind::kStrings;
  ids.strings = index.ids();
  Section emb;
  emb.name = "embeddings";
  emb.kind = SectionKind::kTensors;
  TensorRecord rec;
  rec.name = "embeddings";
  rec.shape = {index.size(), index.dim()};
  for (double v : index.embeddings()) rec.values.push_back(static_cast<float>(v));
  emb.tensors.push_back(std::move(rec));
  Container c;
  c.Add(std::move(meta));
  c.Add(std::move(ids));
  c.Add(std::move(emb));
  return c;
}

GalleryIndex IndexFromContainer(const Container& c) {
  std::size_t count = 0, dim = 0;
  double mask_ratio = 0.0;
  for (const auto& [k, v] : ParseKeyValues(c.Get("index_meta").strings)) {
    if (k == "count") count = ParseU64(k, v);
    else if (k == "dim") dim = ParseU64(k, v);
    else if (k == "mask_ratio") mask_ratio = ParseF64(k, v);
    else throw DataError("index meta: unknown key '" + k + "'");
  }
  std::vector<std::string> ids = c.Get("ids").strings;
  const TensorRecord& rec = c.Get("embeddings").FindTensor("embeddings");
  if (ids.size() != count || rec.shape != Shape{count, dim}) {
    throw DataError("index: " + std::to_string(ids.size()) + " ids and " +
                    ShapeToString(rec.shape) + " embeddings, meta says " +
                    std::to_string(count) + " x " + std::to_string(dim));
  }
  return GalleryIndex(std::move(ids),
                      std::vector<double>(rec.values.begin(), rec.values.end()),
                      dim, mask_ratio);
}

void SaveIndex(const std::filesystem::path& path, const GalleryIndex& index) {
  IndexToContainer(index).Save(path);
}

GalleryIndex LoadIndex(const std::filesystem::path& path) {
  const Container c = Container::Load(path);
  try {
    return IndexFromContainer(c);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace mcir
