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

#include "mcir/retrieval.h"

#include <algorithm>
#include <cmath>

#include "mcir/errors.h"

namespace mcir {

std::vector<double> ComposeInference(std::span<const double> f_image,
                                     std::span<const double> f_text,
                                     double w) {
  if (!(w >= 0.0 && w < 1.0)) {
    throw ConfigError("inference weight w must be in [0, 1), got " +
                      std::to_string(w));
  }
  if (f_image.size() != f_text.size()) {
    throw ShapeError("compose_inference: dims " +
                     std::to_string(f_image.size()) + " vs " +
                     std::to_string(f_text.size()));
  }
  const double keep = 1.0 - w;
  std::vector<double> out(f_image.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = keep * f_image[i] + f_text[i];
  return out;
}

GalleryIndex::GalleryIndex(std::vector<std::string> ids,
                           std::vector<double> embeddings, std::size_t dim,
                           double mask_ratio)
    : ids_(std::move(ids)),
      embeddings_(std::move(embeddings)),
      dim_(dim),
      mask_ratio_(mask_ratio) {
  if (dim_ == 0 || embeddings_.size() != ids_.size() * dim_) {
    throw ShapeError("gallery index: " + std::to_string(embeddings_.size()) +
                     " values for " + std::to_string(ids_.size()) +
                     " ids of dim " + std::to_string(dim_));
  }
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!row_of_.emplace(ids_[i], i).second) {
      throw InputError("gallery index: duplicate id '" + ids_[i] + "'");
    }
    double* r = embeddings_.data() + i * dim_;
    double ss = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) ss += r[j] * r[j];
    if (ss == 0.0) {
      throw DegenerateInputError("gallery index: zero embedding for '" +
                                 ids_[i] + "'");
    }
    const double nrm = std::sqrt(ss);
    for (std::size_t j = 0; j < dim_; ++j) r[j] /= nrm;
  }
}

RankedList GalleryIndex::Retrieve(const ComposedQuery& query, std::size_t k,
                                  bool exclude_reference) const {
  if (query.feature.size() != dim_) {
    throw ShapeError("retrieve: query dim " +
                     std::to_string(query.feature.size()) + " vs index dim " +
                     std::to_string(dim_));
  }
  double qq = 0.0;
  for (double v : query.feature) {
    if (!std::isfinite(v)) throw InputError("retrieve: non-finite query");
    qq += v * v;
  }
  if (qq == 0.0) throw DegenerateInputError("retrieve: zero-norm query");
  const double qn = std::sqrt(qq);

  std::size_t skip = ids_.size();
  if (exclude_reference && query.reference_id) {
    auto it = row_of_.find(*query.reference_id);
    if (it != row_of_.end()) skip = it->second;
  }
  const std::size_t candidates = ids_.size() - (skip < ids_.size() ? 1 : 0);
  if (k == 0 || k > candidates) {
    throw BoundsError("retrieve: k=" + std::to_string(k) + " with " +
                      std::to_string(candidates) + " candidates");
  }

  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(candidates);
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (i == skip) continue;
    const double* r = embeddings_.data() + i * dim_;
    double dot = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) dot += r[j] * query.feature[j];
    scored.emplace_back(dot / qn, i);
  }
  auto before = [this](const std::pair<double, std::size_t>& a,
                       const std::pair<double, std::size_t>& b) {
    if (a.first != b.first) return a.first > b.first;
    return ids_[a.second] < ids_[b.second];
  };
  std::partial_sort(scored.begin(),
                    scored.begin() + static_cast<std::ptrdiff_t>(k),
                    scored.end(), before);
  RankedList out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i)
    out.push_back(RankedItem{ids_[scored[i].second], scored[i].first});
  return out;
}

std::vector<double> ImageFeature(const Tensor& image,
                                 const DualEncoderParams& params,
                                 const EncoderConfig& config) {
  Tape tape(/*record=*/false);
  const Tensor f = EncodeFullImage(tape, image, params, config);
  return {f.data().begin(), f.data().end()};
}

std::vector<double> TextFeature(std::span<const int> token_ids,
                                const DualEncoderParams& params,
                                const EncoderConfig& config) {
  Tape tape(/*record=*/false);
  const Tensor f = EncodeText(tape, token_ids, params, config);
  return {f.data().begin(), f.data().end()};
}

GalleryIndex BuildIndex(std::span<const GalleryImage> images,
                        const DualEncoderParams& params,
                        const EncoderConfig& config, double mask_ratio) {
  if (images.empty()) throw InputError("build_index: no images");
  std::vector<std::string> ids;
  std::vector<double> rows;
  ids.reserve(images.size());
  rows.reserve(images.size() * config.embed_dim);
  for (const GalleryImage& g : images) {
    ids.push_back(g.id);
    const std::vector<double> f = ImageFeature(g.image, params, config);
    rows.insert(rows.end(), f.begin(), f.end());
  }
  return GalleryIndex(std::move(ids), std::move(rows), config.embed_dim,
                      mask_ratio);
}

}  // namespace mcir
