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

// Composed-retrieval metrics: Recall@K (FashionIQ / CIRR), Recall_Subset@K
// (CIRR candidate subsets) and mAP@K with several ground truths (CIRCO).

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcir/retrieval.h"

namespace mcir {

struct EvalRecord {
  std::string query_id;
  std::vector<std::string> ground_truth_ids;  // nonempty
  std::optional<std::vector<std::string>> subset_ids;
  std::optional<std::string> reference_id;

  // Throws ProtocolError if ground truth is empty, not inside the subset, or
  // the subset contains the reference.
  void Validate() const;
};

// 1.0 iff a ground-truth id is among the first k items. InputError on an
// empty ranking.
double RecallAtK(const RankedList& ranked,
                 std::span<const std::string> ground_truth, std::size_t k);

// Recall@k after keeping only rec.subset_ids (order preserved).
// ProtocolError without a subset; BoundsError if k > |subset|.
double SubsetRecallAtK(const RankedList& ranked_over_full_gallery,
                       const EvalRecord& rec, std::size_t k);

// AP@k = (1 / min(|gt|, k)) * sum_{i<=k} rel(i) * precision@i.
double MapAtK(const RankedList& ranked,
              std::span<const std::string> ground_truth, std::size_t k);

struct EvalProtocol {
  std::vector<std::size_t> recall_ks = {1, 5, 10, 50};
  std::vector<std::size_t> subset_ks = {1, 2, 3};
  std::vector<std::size_t> map_ks = {5, 10, 25, 50};
  // Remove the reference image from the full-gallery ranking. Subset
  // metrics always exclude it.
  bool exclude_reference = false;
};

struct MetricValue {
  std::string metric;  // "recall", "subset_recall" or "map"
  std::size_t k = 0;
  double value = 0.0;

  bool operator==(const MetricValue&) const = default;
};

struct MetricsReport {
  std::vector<MetricValue> values;
  std::size_t num_queries = 0;

  // Throws InputError when the metric was not computed.
  double Get(const std::string& metric, std::size_t k) const;
  // Aligned human-readable table.
  std::string Table(const std::string& title = "") const;
  // One JSON object per line: metric, k, value, n_queries.
  std::string Jsonl() const;

  bool operator==(const MetricsReport&) const = default;
};

// One composed query per record, same order. Ground-truth and subset ids
// missing from the index are reported together in one InputError.
MetricsReport Evaluate(std::span<const EvalRecord> records,
                       const GalleryIndex& index,
                       std::span<const ComposedQuery> queries,
                       const EvalProtocol& protocol);

// Query q is ranked against galleries[q] only.
MetricsReport Evaluate(std::span<const EvalRecord> records,
                       std::span<const GalleryIndex> galleries,
                       std::span<const ComposedQuery> queries,
                       const EvalProtocol& protocol);

}  // namespace mcir
