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

// Zero-shot inference: compose (1 - w) * image + text and rank an exact
// cosine index of gallery images.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mcir/encoders.h"
#include "mcir/tensor.h"

namespace mcir {

// (1 - w) * f_image + f_text, elementwise. Only the image feature is
// down-weighted. Throws ConfigError unless 0 <= w < 1.
std::vector<double> ComposeInference(std::span<const double> f_image,
                                     std::span<const double> f_text, double w);

struct RankedItem {
  std::string id;
  double score = 0.0;

  bool operator==(const RankedItem&) const = default;
};

// Descending score, ties broken by ascending id.
using RankedList = std::vector<RankedItem>;

struct ComposedQuery {
  std::optional<std::string> reference_id;
  std::vector<double> feature;
};

class GalleryIndex {
 public:
  GalleryIndex() = default;

  // Rows are L2-normalized here. Throws InputError on duplicate ids or
  // DegenerateInputError on a zero row.
  GalleryIndex(std::vector<std::string> ids, std::vector<double> embeddings,
               std::size_t dim, double mask_ratio);

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  double mask_ratio() const { return mask_ratio_; }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<double>& embeddings() const { return embeddings_; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(embeddings_).subspan(i * dim_, dim_);
  }
  bool contains(const std::string& id) const { return row_of_.contains(id); }

  // Top-k by cosine similarity. With exclude_reference, the query's
  // reference id (if any) is removed before ranking and k counts the
  // remaining items. Throws BoundsError unless 1 <= k <= candidates.
  RankedList Retrieve(const ComposedQuery& query, std::size_t k,
                      bool exclude_reference) const;

 private:
  std::vector<std::string> ids_;
  std::vector<double> embeddings_;  // row-major size() x dim()
  std::size_t dim_ = 0;
  double mask_ratio_ = 0.0;
  std::unordered_map<std::string, std::size_t> row_of_;
};

struct GalleryImage {
  std::string id;
  Tensor image;
};

// Encodes every full (unmasked) image on a non-recording tape. Rows keep
// input order. `mask_ratio` is metadata for the query side.
GalleryIndex BuildIndex(std::span<const GalleryImage> images,
                        const DualEncoderParams& params,
                        const EncoderConfig& config, double mask_ratio);

// Features without gradient tracking.
std::vector<double> ImageFeature(const Tensor& image,
                                 const DualEncoderParams& params,
                                 const EncoderConfig& config);
std::vector<double> TextFeature(std::span<const int> token_ids,
                                const DualEncoderParams& params,
                                const EncoderConfig& config);

}  // namespace mcir
