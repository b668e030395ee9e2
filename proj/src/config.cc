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

#include "mcir/config.h"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "mcir/checkpoint.h"
#include "mcir/errors.h"

namespace mcir {

namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Field {
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

using Schema = std::map<std::string, std::map<std::string, Field>>;

[[noreturn]] void Bad(const std::string& key, const std::string& value,
                      const std::string& what) {
  throw ConfigError("config key '" + key + "': '" + value + "' is not " + what);
}

std::uint64_t ToU64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    Bad(key, v, "a non-negative integer");
  }
  return out;
}

double ToF64(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) Bad(key, v, "a number");
  return out;
}

Field SizeField(const std::string& key, std::size_t& ref) {
  return {[&ref, key](const std::string& v) { ref = ToU64(key, v); },
          [&ref] { return std::to_string(ref); }};
}

Field U64Field(const std::string& key, std::uint64_t& ref) {
  return {[&ref, key](const std::string& v) { ref = ToU64(key, v); },
          [&ref] { return std::to_string(ref); }};
}

Field F64Field(const std::string& key, double& ref) {
  return {[&ref, key](const std::string& v) { ref = ToF64(key, v); },
          [&ref] { return FormatDouble(ref); }};
}

Field BoolField(const std::string& key, bool& ref) {
  return {[&ref, key](const std::string& v) {
            if (v == "true") ref = true;
            else if (v == "false") ref = false;
            else Bad(key, v, "true or false");
          },
          [&ref] { return std::string(ref ? "true" : "false"); }};
}

Field StringField(const std::string& key, std::string& ref) {
  return {[&ref, key](const std::string& v) {
            if (v.empty()) Bad(key, v, "a nonempty path");
            ref = v;
          },
          [&ref] { return ref; }};
}

Field ListField(const std::string& key, std::vector<std::size_t>& ref) {
  return {[&ref, key](const std::string& v) {
            ref.clear();
            std::stringstream ss(v);
            std::string item;
            while (std::getline(ss, item, ',')) {
              const std::size_t k = ToU64(key, Trim(item));
              if (k == 0) Bad(key, v, "a list of positive integers");
              ref.push_back(k);
            }
          },
          [&ref] {
            std::string out;
            for (std::size_t k : ref) {
              if (!out.empty()) out += ",";
              out += std::to_string(k);
            }
            return out;
          }};
}

Field OptionalF64Field(const std::string& key, std::optional<double>& ref) {
  return {[&ref, key](const std::string& v) {
            if (v == "auto") ref.reset();
            else ref = ToF64(key, v);
          },
          [&ref] { return ref ? FormatDouble(*ref) : std::string("auto"); }};
}

Schema MakeSchema(RunConfig& c) {
  Schema s;
  auto& e = s["encoder"];
  e["image_size"] = SizeField("image_size", c.encoder.image_size);
  e["patch_size"] = SizeField("patch_size", c.encoder.patch_size);
  e["channels"] = SizeField("channels", c.encoder.channels);
  e["embed_dim"] = SizeField("embed_dim", c.encoder.embed_dim);
  e["num_layers"] = SizeField("num_layers", c.encoder.num_layers);
  e["num_heads"] = SizeField("num_heads", c.encoder.num_heads);
  e["mlp_ratio"] = F64Field("mlp_ratio", c.encoder.mlp_ratio);
  e["vocab_size"] = SizeField("vocab_size", c.encoder.vocab_size);
  e["max_text_len"] = SizeField("max_text_len", c.encoder.max_text_len);
  e["seed"] = U64Field("seed", c.encoder.seed);

  auto& t = s["training"];
  TrainConfig& tc = c.training;
  t["batch_size"] = SizeField("batch_size", tc.batch_size);
  t["learning_rate"] = F64Field("learning_rate", tc.learning_rate);
  t["weight_decay"] = F64Field("weight_decay", tc.weight_decay);
  t["epochs"] = SizeField("epochs", tc.epochs);
  t["adam_beta1"] = F64Field("adam_beta1", tc.adam_beta1);
  t["adam_beta2"] = F64Field("adam_beta2", tc.adam_beta2);
  t["adam_eps"] = F64Field("adam_eps", tc.adam_eps);
  t["temperature"] = F64Field("temperature", tc.temperature);
  t["seed"] = U64Field("seed", tc.seed);

  auto& m = s["masking"];
  m["ratio"] = F64Field("ratio", tc.mask.ratio);
  m["seed"] = U64Field("seed", tc.mask.seed);

  auto& d = s["data"];
  d["n_pairs"] = SizeField("n_pairs", c.data.n_pairs);
  d["n_eval"] = SizeField("n_eval", c.data.n_eval);
  d["gallery_size"] = SizeField("gallery_size", c.data.gallery_size);
  d["pretrain_seed"] = U64Field("pretrain_seed", c.data.pretrain_seed);
  d["eval_seed"] = U64Field("eval_seed", c.data.eval_seed);
  d["grid"] = SizeField("grid", c.data.synth.grid);
  d["min_glyphs"] = SizeField("min_glyphs", c.data.synth.min_glyphs);
  d["max_glyphs"] = SizeField("max_glyphs", c.data.synth.max_glyphs);
  d["multi_gt_fraction"] =
      F64Field("multi_gt_fraction", c.data.synth.multi_gt_fraction);
  d["subset_size"] = SizeField("subset_size", c.data.synth.subset_size);

  auto& v = s["eval"];
  v["recall_ks"] = ListField("recall_ks", c.eval.protocol.recall_ks);
  v["subset_ks"] = ListField("subset_ks", c.eval.protocol.subset_ks);
  v["map_ks"] = ListField("map_ks", c.eval.protocol.map_ks);
  v["exclude_reference"] =
      BoolField("exclude_reference", c.eval.protocol.exclude_reference);
  v["inference_weight"] =
      OptionalF64Field("inference_weight", c.eval.inference_weight);

  auto& cb = s["combiner"];
  CombinerConfig& cc = c.combiner.combiner;
  cb["hidden"] = SizeField("hidden", cc.hidden);
  cb["initial_gate_logit"] =
      F64Field("initial_gate_logit", cc.initial_gate_logit);
  cb["seed"] = U64Field("seed", cc.seed);
  cb["batch_size"] = SizeField("batch_size", cc.train.batch_size);
  cb["learning_rate"] = F64Field("learning_rate", cc.train.learning_rate);
  cb["weight_decay"] = F64Field("weight_decay", cc.train.weight_decay);
  cb["epochs"] = SizeField("epochs", cc.train.epochs);
  cb["temperature"] = F64Field("temperature", cc.train.temperature);
  cb["train_seed"] = U64Field("train_seed", cc.train.seed);
  cb["n_train"] = SizeField("n_train", c.combiner.n_train);
  cb["n_heldout"] = SizeField("n_heldout", c.combiner.n_heldout);
  cb["data_seed"] = U64Field("data_seed", c.combiner.data_seed);

  auto& p = s["paths"];
  p["data_dir"] = StringField("data_dir", c.paths.data_dir);
  p["checkpoint"] = StringField("checkpoint", c.paths.checkpoint);
  p["init_checkpoint"] = StringField("init_checkpoint", c.paths.init_checkpoint);
  p["combiner_checkpoint"] =
      StringField("combiner_checkpoint", c.paths.combiner_checkpoint);
  p["index"] = StringField("index", c.paths.index);
  p["reports"] = StringField("reports", c.paths.reports);
  return s;
}

const std::vector<std::string>& SectionOrder() {
  static const std::vector<std::string> order = {
      "encoder", "training", "masking", "data", "eval", "combiner", "paths"};
  return order;
}

}  // namespace

RunConfig RunConfig::Parse(const std::string& text) {
  RunConfig c;
  Schema schema = MakeSchema(c);
  std::set<std::string> seen_sections;
  std::set<std::string> seen_keys;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  for (int line_no = 1; std::getline(in, raw); ++line_no) {
    const std::string line = Trim(raw);
    const std::string where = "config line " + std::to_string(line_no);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section");
      section = Trim(line.substr(1, line.size() - 2));
      if (!schema.contains(section)) {
        throw ConfigError(where + ": unknown section [" + section + "]");
      }
      if (!seen_sections.insert(section).second) {
        throw ConfigError(where + ": duplicate section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(where + ": expected key = value");
    }
    if (section.empty()) {
      throw ConfigError(where + ": key outside of any section");
    }
    const std::string key = Trim(line.substr(0, eq));
    const std::string value = Trim(line.substr(eq + 1));
    auto& fields = schema.at(section);
    auto it = fields.find(key);
    if (it == fields.end()) {
      throw ConfigError(where + ": unknown key '" + key + "' in [" + section +
                        "]");
    }
    if (!seen_keys.insert(section + "." + key).second) {
      throw ConfigError(where + ": duplicate key '" + key + "'");
    }
    it->second.set(value);
  }
  for (const char* required :
       {"encoder", "training", "masking", "data", "eval", "paths"}) {
    if (!seen_sections.contains(required)) {
      throw ConfigError(std::string("config: missing section [") + required + "]");
    }
  }
  c.Validate();
  return c;
}

RunConfig RunConfig::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return Parse(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string RunConfig::Render() const {
  RunConfig copy = *this;
  Schema schema = MakeSchema(copy);
  std::string out;
  for (const std::string& section : SectionOrder()) {
    out += "[" + section + "]\n";
    for (const auto& [key, field] : schema.at(section)) {
      out += key + " = " + field.get() + "\n";
    }
    out += "\n";
  }
  return out;
}

void RunConfig::OverrideSeed(std::uint64_t seed) {
  training.seed = seed;
  training.mask.seed = DeriveSeed(seed, {0x3a5c});
  encoder.seed = DeriveSeed(seed, {0xe2c0});
}

void RunConfig::Validate() const {
  encoder.Validate();
  training.Validate();
  data.synth.Validate();
  combiner.combiner.Validate();
  if (data.n_pairs == 0) throw ConfigError("data.n_pairs must be >= 1");
  if (data.n_eval == 0) throw ConfigError("data.n_eval must be >= 1");
  if (data.gallery_size < 2) throw ConfigError("data.gallery_size must be >= 2");
  if (data.synth.grid != encoder.grid()) {
    throw ConfigError("data.grid " + std::to_string(data.synth.grid) +
                      " does not match the encoder patch grid " +
                      std::to_string(encoder.grid()));
  }
  if (Vocabulary::Get().size() > encoder.vocab_size) {
    throw ConfigError("encoder.vocab_size " +
                      std::to_string(encoder.vocab_size) +
                      " is smaller than the synthetic vocabulary (" +
                      std::to_string(Vocabulary::Get().size()) + ")");
  }
  // Longest caption: every glyph phrase is four words plus a separator.
  const std::size_t longest = data.synth.max_glyphs * 5 - 1;
  if (longest > encoder.max_text_len) {
    throw ConfigError("encoder.max_text_len " +
                      std::to_string(encoder.max_text_len) +
                      " is shorter than the longest caption (" +
                      std::to_string(longest) + " tokens)");
  }
  if (eval.inference_weight &&
      !(*eval.inference_weight >= 0.0 && *eval.inference_weight < 1.0)) {
    throw ConfigError("eval.inference_weight must be in [0, 1)");
  }
  for (std::size_t k : eval.protocol.subset_ks) {
    if (k > data.synth.subset_size) {
      throw ConfigError("eval.subset_ks entry " + std::to_string(k) +
                        " exceeds data.subset_size");
    }
  }
  if (combiner.n_train == 0 || combiner.n_heldout == 0) {
    throw ConfigError("combiner.n_train and n_heldout must be >= 1");
  }
}

}  // namespace mcir
