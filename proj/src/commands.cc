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

#include "mcir/commands.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "mcir/combiner.h"
#include "mcir/errors.h"
#include "mcir/retrieval.h"

namespace mcir {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

constexpr std::size_t kRankingsPerQuery = 10;

void WriteText(const fs::path& path, const std::string& text) {
  WriteFileBytes(path, std::span<const std::uint8_t>(
                           reinterpret_cast<const std::uint8_t*>(text.data()),
                           text.size()));
}

void MakeDirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create directory '" + dir.string() +
                  "': " + ec.message());
  }
}

fs::path RequireFile(const fs::path& path) {
  if (!fs::exists(path)) {
    throw DataError("missing file '" + path.string() +
                    "' (run gen-data / train first)");
  }
  return path;
}

std::vector<Json> ReadJsonl(const fs::path& path) {
  const std::vector<std::uint8_t> bytes = ReadFileBytes(RequireFile(path));
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::vector<Json> out;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const Json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": " +
                      e.what());
    }
  }
  return out;
}

template <typename T>
T Field(const Json& j, const char* key, const fs::path& path) {
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw DataError(path.string() + ": record without a valid '" +
                    std::string(key) + "'");
  }
}

// One container per image set: section "ids" plus a single [N x C x H x W]
// tensor named "images".
void WriteImageSet(const fs::path& path, const std::vector<GalleryImage>& set,
                   const EncoderConfig& encoder) {
  Section ids{"ids", SectionKind::kStrings, {}, {}};
  TensorRecord rec;
  rec.name = "images";
  rec.shape = {set.size(), encoder.channels, encoder.image_size,
               encoder.image_size};
  rec.values.reserve(ShapeNumel(rec.shape));
  for (const GalleryImage& g : set) {
    ids.strings.push_back(g.id);
    for (double v : g.image.data()) rec.values.push_back(static_cast<float>(v));
  }
  Section images{"images", SectionKind::kTensors, {std::move(rec)}, {}};
  Container c;
  c.Add(std::move(ids));
  c.Add(std::move(images));
  c.Save(path);
}

std::vector<GalleryImage> ReadImageSet(const fs::path& path,
                                       const EncoderConfig& encoder) {
  const Container c = Container::Load(RequireFile(path));
  const std::vector<std::string>& ids = c.Get("ids").strings;
  const TensorRecord& rec = c.Get("images").FindTensor("images");
  const Shape expected = {ids.size(), encoder.channels, encoder.image_size,
                          encoder.image_size};
  if (rec.shape != expected) {
    throw DataError(path.string() + ": images " + ShapeToString(rec.shape) +
                    ", expected " + ShapeToString(expected));
  }
  const std::size_t per = ShapeNumel(expected) / std::max<std::size_t>(ids.size(), 1);
  std::vector<GalleryImage> out;
  out.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out.push_back(GalleryImage{
        ids[i],
        Tensor::FromData({encoder.channels, encoder.image_size,
                          encoder.image_size},
                         std::vector<double>(rec.values.begin() + i * per,
                                             rec.values.begin() + (i + 1) * per))});
  }
  return out;
}

void WriteCaseSet(const fs::path& data_dir, const std::string& set,
                  const std::vector<CirEvalCase>& cases,
                  const std::function<std::string(std::size_t)>& split_of,
                  const EncoderConfig& encoder) {
  std::string case_lines, gallery_lines;
  std::vector<GalleryImage> refs, gallery;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const CirEvalCase& ec = cases[i];
    Json j;
    j["id"] = ec.query_id;
    j["split"] = split_of(i);
    j["reference_id"] = ec.reference_id;
    j["reference_spec"] = ec.reference.Encode();
    j["caption"] = ec.modification_text;
    j["mod_cell"] = ec.modification.cell;
    j["target_spec"] = ec.target.Encode();
    j["gt_ids"] = ec.ground_truth_ids;
    j["subset_ids"] = ec.subset_ids;
    std::vector<std::string> gallery_ids;
    for (const GalleryItem& g : ec.gallery) gallery_ids.push_back(g.id);
    j["gallery_ids"] = gallery_ids;
    j["multi_gt"] = ec.multi_ground_truth;
    case_lines += j.dump() + "\n";
    refs.push_back(GalleryImage{ec.reference_id, RenderImage(ec.reference, encoder)});
    for (const GalleryItem& g : ec.gallery) {
      Json item;
      item["id"] = g.id;
      item["caption"] = CaptionText(g.spec);
      item["spec"] = g.spec.Encode();
      item["split"] = "gallery";
      item["subset"] = ec.query_id;
      item["gt_ids"] = ec.ground_truth_ids;
      gallery_lines += item.dump() + "\n";
      gallery.push_back(GalleryImage{g.id, RenderImage(g.spec, encoder)});
    }
  }
  WriteText(data_dir / (set + "_cases.jsonl"), case_lines);
  WriteText(data_dir / (set + "_gallery.jsonl"), gallery_lines);
  WriteImageSet(data_dir / (set + "_reference_images.mcir"), refs, encoder);
  WriteImageSet(data_dir / (set + "_gallery_images.mcir"), gallery, encoder);
}

std::vector<ImageTextPair> LoadPretrainPairs(const fs::path& data_dir,
                                             const EncoderConfig& encoder) {
  const fs::path manifest = data_dir / "pretrain.jsonl";
  const std::vector<Json> lines = ReadJsonl(manifest);
  std::vector<GalleryImage> images =
      ReadImageSet(data_dir / "pretrain_images.mcir", encoder);
  if (images.size() != lines.size()) {
    throw DataError(manifest.string() + ": " + std::to_string(lines.size()) +
                    " records but " + std::to_string(images.size()) +
                    " images");
  }
  const Vocabulary& vocab = Vocabulary::Get();
  std::vector<ImageTextPair> pairs;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string id = Field<std::string>(lines[i], "id", manifest);
    if (images[i].id != id) {
      throw DataError(manifest.string() + ": record " + id +
                      " does not match image " + images[i].id);
    }
    std::vector<int> ids;
    try {
      ids = vocab.Tokenize(Field<std::string>(lines[i], "caption", manifest));
    } catch (const InputError& e) {
      throw DataError(manifest.string() + ": " + e.what());
    }
    pairs.push_back(ImageTextPair{id, std::move(images[i].image), std::move(ids)});
  }
  return pairs;
}

using FeatureMap = std::unordered_map<std::string, std::vector<double>>;

FeatureMap EncodeImages(std::span<const GalleryImage> images,
                        const DualEncoderParams& params,
                        const EncoderConfig& encoder) {
  FeatureMap out;
  for (const GalleryImage& g : images) {
    out.emplace(g.id, ImageFeature(g.image, params, encoder));
  }
  return out;
}

std::vector<GalleryIndex> CaseGalleries(const std::vector<CirEvalCase>& cases,
                                        const FeatureMap& features,
                                        std::size_t dim, double mask_ratio) {
  std::vector<GalleryIndex> out;
  out.reserve(cases.size());
  for (const CirEvalCase& ec : cases) {
    std::vector<std::string> ids;
    std::vector<double> rows;
    for (const GalleryItem& g : ec.gallery) {
      ids.push_back(g.id);
      const std::vector<double>& f = features.at(g.id);
      rows.insert(rows.end(), f.begin(), f.end());
    }
    out.emplace_back(std::move(ids), std::move(rows), dim, mask_ratio);
  }
  return out;
}

EvalRecord RecordOf(const CirEvalCase& ec) {
  EvalRecord rec;
  rec.query_id = ec.query_id;
  rec.ground_truth_ids = ec.ground_truth_ids;
  rec.subset_ids = ec.subset_ids;
  rec.reference_id = ec.reference_id;
  return rec;
}

using Composer = std::function<std::vector<double>(std::size_t case_index)>;

struct CaseEvaluation {
  MetricsReport report;
  std::string rankings;  // jsonl
};

CaseEvaluation EvaluateCases(const std::vector<CirEvalCase>& cases,
                             std::span<const std::size_t> selected,
                             const FeatureMap& gallery_features,
                             std::size_t dim, double mask_ratio,
                             const Composer& compose,
                             const EvalProtocol& protocol) {
  std::vector<CirEvalCase> chosen;
  for (std::size_t i : selected) chosen.push_back(cases[i]);
  const std::vector<GalleryIndex> galleries =
      CaseGalleries(chosen, gallery_features, dim, mask_ratio);
  std::vector<EvalRecord> records;
  std::vector<ComposedQuery> queries;
  for (std::size_t s = 0; s < selected.size(); ++s) {
    records.push_back(RecordOf(chosen[s]));
    queries.push_back(ComposedQuery{chosen[s].reference_id, compose(selected[s])});
  }
  CaseEvaluation out;
  out.report = Evaluate(records, galleries, queries, protocol);
  for (std::size_t s = 0; s < selected.size(); ++s) {
    const std::size_t k = std::min(kRankingsPerQuery, galleries[s].size());
    const RankedList ranked =
        galleries[s].Retrieve(queries[s], k, /*exclude_reference=*/false);
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      Json j;
      j["query_id"] = records[s].query_id;
      j["rank"] = r + 1;
      j["gallery_id"] = ranked[r].id;
      j["score"] = ranked[r].score;
      out.rankings += j.dump() + "\n";
    }
  }
  return out;
}

std::vector<std::size_t> AllIndices(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i;
  return out;
}

std::string LossLog(const TrainLog& log) {
  std::string out;
  for (const LossRecord& r : log.steps) {
    Json j;
    j["step"] = r.step;
    j["epoch"] = r.epoch;
    j["loss"] = r.loss;
    j["wall_seconds"] = r.wall_seconds;
    out += j.dump() + "\n";
  }
  return out;
}

struct CaseFeatures {
  std::vector<std::vector<double>> reference;
  std::vector<std::vector<double>> text;
};

CaseFeatures EncodeQueries(const LoadedBenchmark& bench,
                           const DualEncoderParams& params,
                           const EncoderConfig& encoder, bool need_image) {
  CaseFeatures f;
  for (std::size_t i = 0; i < bench.cases.size(); ++i) {
    if (need_image) {
      f.reference.push_back(
          ImageFeature(bench.references[i].image, params, encoder));
    }
    f.text.push_back(TextFeature(bench.cases[i].modification_ids, params, encoder));
  }
  return f;
}

std::string MetricLabel(const MetricValue& v) {
  if (v.metric == "recall") return "R@" + std::to_string(v.k);
  if (v.metric == "subset_recall") return "Rs@" + std::to_string(v.k);
  return "mAP@" + std::to_string(v.k);
}

std::string Fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string EvalModeName(EvalMode mode) {
  switch (mode) {
    case EvalMode::kMaskedTuned: return "masked_tuned";
    case EvalMode::kImageOnly: return "image_only";
    case EvalMode::kTextOnly: return "text_only";
    case EvalMode::kAdditiveBaseline: return "additive_baseline";
    case EvalMode::kCombiner: return "combiner";
  }
  return "unknown";
}

EvalMode ParseEvalMode(const std::string& name) {
  for (EvalMode m : {EvalMode::kMaskedTuned, EvalMode::kImageOnly,
                     EvalMode::kTextOnly, EvalMode::kAdditiveBaseline,
                     EvalMode::kCombiner}) {
    if (EvalModeName(m) == name) return m;
  }
  throw ConfigError("unknown eval mode '" + name +
                    "' (masked_tuned, image_only, text_only, "
                    "additive_baseline, combiner)");
}

std::vector<double> ParseRatios(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    char* end = nullptr;
    const double r = std::strtod(item.c_str(), &end);
    if (item.empty() || end != item.c_str() + item.size() ||
        !(r >= 0.0 && r < 1.0)) {
      throw ConfigError("ratio '" + item + "' is not a number in [0, 1)");
    }
    out.push_back(r);
  }
  if (out.empty()) throw ConfigError("empty ratio list");
  return out;
}

LoadedBenchmark LoadBenchmark(const fs::path& data_dir, const std::string& set,
                              const EncoderConfig& encoder) {
  const fs::path cases_path = data_dir / (set + "_cases.jsonl");
  const fs::path gallery_path = data_dir / (set + "_gallery.jsonl");
  const std::vector<Json> case_lines = ReadJsonl(cases_path);
  const std::vector<Json> gallery_lines = ReadJsonl(gallery_path);
  std::vector<GalleryImage> refs =
      ReadImageSet(data_dir / (set + "_reference_images.mcir"), encoder);
  std::vector<GalleryImage> gallery =
      ReadImageSet(data_dir / (set + "_gallery_images.mcir"), encoder);
  if (refs.size() != case_lines.size() || gallery.size() != gallery_lines.size()) {
    throw DataError(set + " set: manifest and image counts differ");
  }

  std::unordered_map<std::string, AttributeSpec> specs;
  try {
    for (std::size_t i = 0; i < gallery_lines.size(); ++i) {
      const std::string id = Field<std::string>(gallery_lines[i], "id", gallery_path);
      if (gallery[i].id != id) {
        throw DataError(gallery_path.string() + ": record " + id +
                        " does not match image " + gallery[i].id);
      }
      specs.emplace(id, AttributeSpec::Decode(
                            Field<std::string>(gallery_lines[i], "spec", gallery_path)));
    }

    LoadedBenchmark out;
    const Vocabulary& vocab = Vocabulary::Get();
    for (std::size_t i = 0; i < case_lines.size(); ++i) {
      const Json& j = case_lines[i];
      CirEvalCase ec;
      ec.query_id = Field<std::string>(j, "id", cases_path);
      ec.reference_id = Field<std::string>(j, "reference_id", cases_path);
      if (refs[i].id != ec.reference_id) {
        throw DataError(cases_path.string() + ": reference " + ec.reference_id +
                        " does not match image " + refs[i].id);
      }
      ec.reference =
          AttributeSpec::Decode(Field<std::string>(j, "reference_spec", cases_path));
      ec.target =
          AttributeSpec::Decode(Field<std::string>(j, "target_spec", cases_path));
      ec.modification.cell = Field<std::size_t>(j, "mod_cell", cases_path);
      if (ec.modification.cell >= ec.target.cells.size()) {
        throw DataError(cases_path.string() + ": mod_cell out of range for " +
                        ec.query_id);
      }
      ec.modification.value = ec.target.cells[ec.modification.cell];
      ec.modification_text = Field<std::string>(j, "caption", cases_path);
      ec.modification_ids = vocab.Tokenize(ec.modification_text);
      ec.ground_truth_ids = Field<std::vector<std::string>>(j, "gt_ids", cases_path);
      ec.subset_ids = Field<std::vector<std::string>>(j, "subset_ids", cases_path);
      ec.multi_ground_truth = Field<bool>(j, "multi_gt", cases_path);
      for (const std::string& gid :
           Field<std::vector<std::string>>(j, "gallery_ids", cases_path)) {
        auto it = specs.find(gid);
        if (it == specs.end()) {
          throw DataError(cases_path.string() + ": gallery id " + gid +
                          " not in " + gallery_path.string());
        }
        ec.gallery.push_back(GalleryItem{gid, it->second});
      }
      out.splits.push_back(Field<std::string>(j, "split", cases_path));
      out.cases.push_back(std::move(ec));
    }
    out.references = std::move(refs);
    out.gallery = std::move(gallery);
    return out;
  } catch (const InputError& e) {
    throw DataError(set + " set: " + e.what());
  }
}

Pipeline::Pipeline(RunConfig config, fs::path out_dir)
    : config_(std::move(config)), out_dir_(std::move(out_dir)) {
  config_.Validate();
}

fs::path Pipeline::Resolve(const std::string& path) const {
  const fs::path p(path);
  return p.is_absolute() ? p : out_dir_ / p;
}

fs::path Pipeline::DataPath(const std::string& file) const {
  return Resolve(config_.paths.data_dir) / file;
}

fs::path Pipeline::ReportPath(const std::string& file) const {
  return Resolve(config_.paths.reports) / file;
}

void Pipeline::GenData() const {
  const RunConfig& c = config_;
  const fs::path dir = Resolve(c.paths.data_dir);
  MakeDirs(dir);

  const std::vector<PretrainPair> pairs = GenPretrainPairs(
      c.data.n_pairs, c.data.pretrain_seed, c.data.synth, c.encoder);
  std::string lines;
  std::vector<GalleryImage> images;
  for (const PretrainPair& p : pairs) {
    Json j;
    j["id"] = p.id;
    j["caption"] = p.caption;
    j["spec"] = p.spec.Encode();
    j["split"] = "pretrain";
    lines += j.dump() + "\n";
    images.push_back(GalleryImage{p.id, p.pair.image});
  }
  WriteText(dir / "pretrain.jsonl", lines);
  WriteImageSet(dir / "pretrain_images.mcir", images, c.encoder);

  const std::vector<CirEvalCase> eval = GenEvalCases(
      c.data.n_eval, c.data.gallery_size, c.data.eval_seed, c.data.synth);
  WriteCaseSet(dir, "eval", eval, [](std::size_t) { return "eval"; }, c.encoder);

  const std::size_t n_train = c.combiner.n_train;
  const std::vector<CirEvalCase> supervised =
      GenEvalCases(n_train + c.combiner.n_heldout, c.data.gallery_size,
                   c.combiner.data_seed, c.data.synth);
  WriteCaseSet(
      dir, "combiner", supervised,
      [n_train](std::size_t i) { return i < n_train ? "train" : "heldout"; },
      c.encoder);
}

TrainResult Pipeline::Train() const {
  const RunConfig& c = config_;
  const std::vector<ImageTextPair> pairs =
      LoadPretrainPairs(Resolve(c.paths.data_dir), c.encoder);
  MakeDirs(Resolve(c.paths.reports));

  Checkpoint init;
  init.encoder = c.encoder;
  init.mask_ratio = c.training.mask.ratio;
  init.params = InitParams(c.encoder);
  SaveCheckpoint(Resolve(c.paths.init_checkpoint), init);

  TrainLog partial;
  TrainResult result;
  try {
    result = mcir::Train(pairs, init.params.Clone(), c.encoder, c.training,
                         [&](const LossRecord& r) { partial.steps.push_back(r); });
  } catch (const DivergenceError&) {
    WriteText(ReportPath("loss_log.jsonl"), LossLog(partial));
    throw;
  }
  WriteText(ReportPath("loss_log.jsonl"), LossLog(result.log));

  Checkpoint ckpt;
  ckpt.encoder = c.encoder;
  ckpt.mask_ratio = c.training.mask.ratio;
  ckpt.trained_steps = result.steps;
  ckpt.params = result.params;
  SaveCheckpoint(Resolve(c.paths.checkpoint), ckpt);
  return result;
}

Pipeline::CombinerOutcome Pipeline::TrainCombinerCmd() const {
  const RunConfig& c = config_;
  const Checkpoint ckpt = LoadCheckpoint(RequireFile(Resolve(c.paths.checkpoint)));
  const LoadedBenchmark bench =
      LoadBenchmark(Resolve(c.paths.data_dir), "combiner", ckpt.encoder);
  std::unordered_map<std::string, const Tensor*> gallery_images;
  for (const GalleryImage& g : bench.gallery) gallery_images.emplace(g.id, &g.image);

  std::vector<SupervisedTriplet> triplets;
  std::vector<std::size_t> heldout;
  for (std::size_t i = 0; i < bench.cases.size(); ++i) {
    if (bench.splits[i] == "heldout") {
      heldout.push_back(i);
      continue;
    }
    const CirEvalCase& ec = bench.cases[i];
    const std::string& target_id = ec.ground_truth_ids.front();
    triplets.push_back(SupervisedTriplet{bench.references[i].image,
                                         ec.modification_ids,
                                         *gallery_images.at(target_id),
                                         target_id});
  }
  if (heldout.empty()) throw DataError("combiner set has no heldout cases");

  CombinerOutcome out;
  out.backbone_before = BackboneFingerprint(ckpt.params);
  out.result = TrainCombiner(ckpt.params, ckpt.encoder, triplets,
                             c.combiner.combiner);
  out.backbone_after = BackboneFingerprint(ckpt.params);

  const std::size_t d = ckpt.encoder.embed_dim;
  const FeatureMap features = EncodeImages(bench.gallery, ckpt.params, ckpt.encoder);
  const CaseFeatures q = EncodeQueries(bench, ckpt.params, ckpt.encoder, true);
  const CombinerParams& comb = out.result.params;
  out.combiner_heldout =
      EvaluateCases(bench.cases, heldout, features, d, ckpt.mask_ratio,
                    [&](std::size_t i) {
                      return CombinerForward(q.reference[i], q.text[i], comb);
                    },
                    c.eval.protocol)
          .report;
  out.additive_heldout =
      EvaluateCases(bench.cases, heldout, features, d, ckpt.mask_ratio,
                    [&](std::size_t i) {
                      return ComposeInference(q.reference[i], q.text[i], 0.0);
                    },
                    c.eval.protocol)
          .report;

  Checkpoint with = ckpt;
  with.combiner = out.result.params;
  SaveCheckpoint(Resolve(c.paths.combiner_checkpoint), with);
  MakeDirs(Resolve(c.paths.reports));
  WriteText(ReportPath("combiner_loss_log.jsonl"), LossLog(out.result.log));
  std::string jsonl;
  for (const auto& [name, report] :
       {std::pair{"combiner", &out.combiner_heldout},
        std::pair{"additive", &out.additive_heldout}}) {
    std::istringstream in(report->Jsonl());
    std::string line;
    while (std::getline(in, line)) {
      Json j = Json::parse(line);
      j["method"] = name;
      jsonl += j.dump() + "\n";
    }
  }
  WriteText(ReportPath("combiner_heldout.jsonl"), jsonl);
  WriteText(ReportPath("combiner_heldout.txt"),
            out.combiner_heldout.Table("heldout combiner") + "\n" +
                out.additive_heldout.Table("heldout additive"));
  return out;
}

GalleryIndex Pipeline::BuildIndexCmd() const {
  const RunConfig& c = config_;
  const Checkpoint ckpt = LoadCheckpoint(RequireFile(Resolve(c.paths.checkpoint)));
  const LoadedBenchmark bench =
      LoadBenchmark(Resolve(c.paths.data_dir), "eval", ckpt.encoder);
  GalleryIndex index =
      BuildIndex(bench.gallery, ckpt.params, ckpt.encoder, ckpt.mask_ratio);
  SaveIndex(Resolve(c.paths.index), index);
  return index;
}

MetricsReport Pipeline::Eval(EvalMode mode) const {
  const RunConfig& c = config_;
  std::string ckpt_path = c.paths.checkpoint;
  if (mode == EvalMode::kAdditiveBaseline) ckpt_path = c.paths.init_checkpoint;
  if (mode == EvalMode::kCombiner) ckpt_path = c.paths.combiner_checkpoint;
  const Checkpoint ckpt = LoadCheckpoint(RequireFile(Resolve(ckpt_path)));
  if (mode == EvalMode::kCombiner && !ckpt.combiner) {
    throw ConfigError("combiner mode: checkpoint '" + ckpt_path +
                      "' has no combiner section");
  }
  const LoadedBenchmark bench =
      LoadBenchmark(Resolve(c.paths.data_dir), "eval", ckpt.encoder);
  const double w = c.eval.inference_weight.value_or(ckpt.mask_ratio);
  const FeatureMap features = EncodeImages(bench.gallery, ckpt.params, ckpt.encoder);
  const CaseFeatures q = EncodeQueries(bench, ckpt.params, ckpt.encoder,
                                       mode != EvalMode::kTextOnly);

  Composer compose;
  switch (mode) {
    case EvalMode::kMaskedTuned:
      compose = [&](std::size_t i) {
        return ComposeInference(q.reference[i], q.text[i], w);
      };
      break;
    case EvalMode::kImageOnly:
      compose = [&](std::size_t i) { return q.reference[i]; };
      break;
    case EvalMode::kTextOnly:
      compose = [&](std::size_t i) { return q.text[i]; };
      break;
    case EvalMode::kAdditiveBaseline:
      compose = [&](std::size_t i) {
        return ComposeInference(q.reference[i], q.text[i], 0.0);
      };
      break;
    case EvalMode::kCombiner:
      compose = [&](std::size_t i) {
        return CombinerForward(q.reference[i], q.text[i], *ckpt.combiner);
      };
      break;
  }
  const std::vector<std::size_t> all = AllIndices(bench.cases.size());
  const CaseEvaluation ev =
      EvaluateCases(bench.cases, all, features, ckpt.encoder.embed_dim,
                    ckpt.mask_ratio, compose, c.eval.protocol);

  const std::string name = EvalModeName(mode);
  MakeDirs(Resolve(c.paths.reports));
  WriteText(ReportPath("eval_" + name + ".jsonl"), ev.report.Jsonl());
  WriteText(ReportPath("eval_" + name + ".txt"),
            ev.report.Table("eval " + name + " (" + ckpt_path + ")"));
  WriteText(ReportPath("rankings_" + name + ".jsonl"), ev.rankings);
  return ev.report;
}

std::vector<Pipeline::AblationRow> Pipeline::Ablate(
    const std::vector<double>& ratios) const {
  if (ratios.empty()) throw ConfigError("ablate: empty ratio list");
  for (double r : ratios) {
    if (!(r >= 0.0 && r < 1.0)) {
      throw ConfigError("ablate: ratio " + FormatDouble(r) + " not in [0, 1)");
    }
  }
  const RunConfig& c = config_;
  const std::vector<ImageTextPair> pairs =
      LoadPretrainPairs(Resolve(c.paths.data_dir), c.encoder);
  const LoadedBenchmark bench =
      LoadBenchmark(Resolve(c.paths.data_dir), "eval", c.encoder);
  const std::vector<std::size_t> all = AllIndices(bench.cases.size());

  std::vector<AblationRow> rows;
  for (double r : ratios) {
    TrainConfig tc = c.training;
    tc.mask.ratio = r;
    const TrainResult trained = mcir::Train(pairs, c.encoder, tc);
    const FeatureMap features = EncodeImages(bench.gallery, trained.params, c.encoder);
    const CaseFeatures q = EncodeQueries(bench, trained.params, c.encoder, true);
    AblationRow row;
    row.ratio = r;
    row.report = EvaluateCases(bench.cases, all, features, c.encoder.embed_dim, r,
                               [&](std::size_t i) {
                                 return ComposeInference(q.reference[i],
                                                         q.text[i], r);
                               },
                               c.eval.protocol)
                     .report;
    row.final_loss = tc.epochs == 0 ? std::nan("")
                                    : trained.log.EpochMean(tc.epochs - 1);
    rows.push_back(std::move(row));
  }

  std::string jsonl;
  for (const AblationRow& row : rows) {
    for (const MetricValue& v : row.report.values) {
      Json j;
      j["ratio"] = row.ratio;
      j["metric"] = v.metric;
      j["k"] = v.k;
      j["value"] = v.value;
      j["n_queries"] = row.report.num_queries;
      jsonl += j.dump() + "\n";
    }
  }
  MakeDirs(Resolve(c.paths.reports));
  WriteText(ReportPath("ablation.jsonl"), jsonl);
  WriteText(ReportPath("ablation.txt"), AblationTable(rows));
  return rows;
}

std::string AblationTable(const std::vector<Pipeline::AblationRow>& rows) {
  std::string out = "mask ratio ablation (masked_tuned, w = ratio)\n";
  out += "ratio ";
  if (!rows.empty()) {
    for (const MetricValue& v : rows.front().report.values) {
      std::string label = MetricLabel(v);
      label.resize(std::max<std::size_t>(label.size(), 7), ' ');
      out += " " + label;
    }
  }
  out += " final_loss\n";
  for (const Pipeline::AblationRow& row : rows) {
    std::string ratio = Fixed(row.ratio, 2);
    ratio.resize(6, ' ');
    out += ratio;
    for (const MetricValue& v : row.report.values) {
      std::string cell = Fixed(v.value, 4);
      cell.resize(std::max<std::size_t>(MetricLabel(v).size(), 7), ' ');
      out += " " + cell;
    }
    out += " " + Fixed(row.final_loss, 4) + "\n";
  }
  return out;
}

std::string InspectContainer(const fs::path& path) {
  const std::vector<std::uint8_t> bytes = ReadFileBytes(path);
  const Container c = Container::Parse(bytes);
  std::string out = path.string() + ": " + std::to_string(bytes.size()) +
                    " bytes, version " + std::to_string(kContainerVersion) +
                    ", checksum ok, " + std::to_string(c.sections().size()) +
                    " sections\n";
  for (const Section& s : c.sections()) {
    if (s.kind == SectionKind::kStrings) {
      out += "[" + s.name + "] " + std::to_string(s.strings.size()) +
             " strings\n";
      const bool key_values =
          std::ranges::all_of(s.strings, [](const std::string& l) {
            return l.find('=') != std::string::npos;
          });
      const std::size_t shown = key_values ? s.strings.size()
                                           : std::min<std::size_t>(s.strings.size(), 3);
      for (std::size_t i = 0; i < shown; ++i) out += "  " + s.strings[i] + "\n";
      if (shown < s.strings.size()) out += "  ...\n";
      continue;
    }
    std::size_t total = 0;
    for (const TensorRecord& t : s.tensors) total += t.values.size();
    out += "[" + s.name + "] " + std::to_string(s.tensors.size()) +
           " tensors, " + std::to_string(total) + " values\n";
    for (const TensorRecord& t : s.tensors) {
      out += "  " + t.name + " " + ShapeToString(t.shape) + "\n";
    }
  }
  return out;
}

}  // namespace mcir
