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

#include "mcir/metrics.h"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

#include "mcir/errors.h"

namespace mcir {

namespace {

bool Contains(std::span<const std::string> ids, const std::string& id) {
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

void RequireRanking(const RankedList& ranked, std::size_t k) {
  if (ranked.empty()) throw InputError("metric on an empty ranking");
  if (k == 0) throw BoundsError("metric cutoff k must be >= 1");
}

}  // namespace

void EvalRecord::Validate() const {
  if (ground_truth_ids.empty()) {
    throw ProtocolError("query '" + query_id + "' has no ground truth");
  }
  if (subset_ids) {
    for (const std::string& g : ground_truth_ids) {
      if (!Contains(*subset_ids, g)) {
        throw ProtocolError("query '" + query_id + "': ground truth '" + g +
                            "' is not in its subset");
      }
    }
    if (reference_id && Contains(*subset_ids, *reference_id)) {
      throw ProtocolError("query '" + query_id +
                          "': subset contains the reference image");
    }
  }
}

double RecallAtK(const RankedList& ranked,
                 std::span<const std::string> ground_truth, std::size_t k) {
  RequireRanking(ranked, k);
  const std::size_t n = std::min(k, ranked.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (Contains(ground_truth, ranked[i].id)) return 1.0;
  }
  return 0.0;
}

double SubsetRecallAtK(const RankedList& ranked_over_full_gallery,
                       const EvalRecord& rec, std::size_t k) {
  if (!rec.subset_ids) {
    throw ProtocolError("query '" + rec.query_id + "' has no candidate subset");
  }
  rec.Validate();
  const auto& subset = *rec.subset_ids;
  if (k > subset.size()) {
    throw BoundsError("subset recall: k=" + std::to_string(k) +
                      " exceeds subset of " + std::to_string(subset.size()));
  }
  RankedList filtered;
  for (const RankedItem& item : ranked_over_full_gallery) {
    if (Contains(subset, item.id)) filtered.push_back(item);
  }
  return RecallAtK(filtered, rec.ground_truth_ids, k);
}

double MapAtK(const RankedList& ranked,
              std::span<const std::string> ground_truth, std::size_t k) {
  RequireRanking(ranked, k);
  if (ground_truth.empty()) throw InputError("mAP with empty ground truth");
  const std::size_t n = std::min(k, ranked.size());
  const std::uint64_t m = std::min(ground_truth.size(), k);
  // Sum of precisions as num / den, so the result is one correctly rounded
  // division. Falls back to floating point if the fraction grows too large.
  constexpr std::uint64_t kExactLimit = std::uint64_t{1} << 53;
  std::uint64_t num = 0, den = 1, hits = 0;
  long double sum = 0.0L;
  bool exact = true;
  for (std::size_t i = 0; i < n; ++i) {
    if (!Contains(ground_truth, ranked[i].id)) continue;
    ++hits;
    const std::uint64_t rank = i + 1;
    sum += static_cast<long double>(hits) / static_cast<long double>(rank);
    if (!exact) continue;
    const std::uint64_t g = std::gcd(den, rank);
    const std::uint64_t scale = rank / g;
    if (den > kExactLimit / scale) {
      exact = false;
      continue;
    }
    num = num * scale + hits * (den / g);
    den *= scale;
    const std::uint64_t r = std::gcd(num, den);
    num /= r;
    den /= r;
  }
  if (exact && den <= kExactLimit / m) {
    return static_cast<double>(num) / static_cast<double>(den * m);
  }
  return static_cast<double>(sum / static_cast<long double>(m));
}

double MetricsReport::Get(const std::string& metric, std::size_t k) const {
  for (const MetricValue& v : values) {
    if (v.metric == metric && v.k == k) return v.value;
  }
  throw InputError("metric " + metric + "@" + std::to_string(k) +
                   " not in report");
}

std::string MetricsReport::Table(const std::string& title) const {
  std::ostringstream os;
  if (!title.empty()) os << title << "\n";
  char line[96];
  std::snprintf(line, sizeof(line), "%-16s %6s %10s\n", "metric", "k", "value");
  os << line;
  for (const MetricValue& v : values) {
    std::snprintf(line, sizeof(line), "%-16s %6zu %10.4f\n", v.metric.c_str(),
                  v.k, v.value);
    os << line;
  }
  std::snprintf(line, sizeof(line), "(%zu queries)\n", num_queries);
  os << line;
  return os.str();
}

std::string MetricsReport::Jsonl() const {
  std::string out;
  for (const MetricValue& v : values) {
    nlohmann::ordered_json j;
    j["metric"] = v.metric;
    j["k"] = v.k;
    j["value"] = v.value;
    j["n_queries"] = num_queries;
    out += j.dump() + "\n";
  }
  return out;
}

namespace {

using GalleryOf = std::function<const GalleryIndex&(std::size_t)>;

MetricsReport EvaluateImpl(std::span<const EvalRecord> records,
                           const GalleryOf& gallery_of,
                           std::span<const ComposedQuery> queries,
                           const EvalProtocol& protocol) {
  if (records.size() != queries.size()) {
    throw InputError("evaluate: " + std::to_string(records.size()) +
                     " records but " + std::to_string(queries.size()) +
                     " queries");
  }
  if (records.empty()) throw InputError("evaluate: no records");
  std::vector<std::string> offenders;
  for (std::size_t q = 0; q < records.size(); ++q) {
    const EvalRecord& rec = records[q];
    const GalleryIndex& index = gallery_of(q);
    rec.Validate();
    for (const std::string& g : rec.ground_truth_ids) {
      if (!index.contains(g)) offenders.push_back(rec.query_id + ":" + g);
    }
    if (rec.subset_ids) {
      for (const std::string& s : *rec.subset_ids) {
        if (!index.contains(s)) offenders.push_back(rec.query_id + ":" + s);
      }
    } else if (!protocol.subset_ks.empty()) {
      throw ProtocolError("evaluate: subset recall requested but query '" +
                          rec.query_id + "' has no subset");
    }
  }
  if (!offenders.empty()) {
    std::string msg = "evaluate: ids missing from the gallery index:";
    for (const std::string& o : offenders) msg += " " + o;
    throw InputError(msg);
  }

  std::vector<double> recall(protocol.recall_ks.size(), 0.0);
  std::vector<double> subset(protocol.subset_ks.size(), 0.0);
  std::vector<double> map(protocol.map_ks.size(), 0.0);
  for (std::size_t q = 0; q < records.size(); ++q) {
    const EvalRecord& rec = records[q];
    const GalleryIndex& index = gallery_of(q);
    ComposedQuery query = queries[q];
    if (!query.reference_id) query.reference_id = rec.reference_id;
    const bool excluded = protocol.exclude_reference && query.reference_id &&
                          index.contains(*query.reference_id);
    const RankedList ranked = index.Retrieve(
        query, index.size() - (excluded ? 1 : 0), protocol.exclude_reference);
    for (std::size_t i = 0; i < protocol.recall_ks.size(); ++i)
      recall[i] += RecallAtK(ranked, rec.ground_truth_ids, protocol.recall_ks[i]);
    for (std::size_t i = 0; i < protocol.map_ks.size(); ++i)
      map[i] += MapAtK(ranked, rec.ground_truth_ids, protocol.map_ks[i]);
    // The subset never holds the reference, so filtering the ranking
    // already excludes it.
    for (std::size_t i = 0; i < protocol.subset_ks.size(); ++i)
      subset[i] += SubsetRecallAtK(ranked, rec, protocol.subset_ks[i]);
  }
  MetricsReport report;
  report.num_queries = records.size();
  const double n = static_cast<double>(records.size());
  for (std::size_t i = 0; i < recall.size(); ++i)
    report.values.push_back({"recall", protocol.recall_ks[i], recall[i] / n});
  for (std::size_t i = 0; i < subset.size(); ++i)
    report.values.push_back(
        {"subset_recall", protocol.subset_ks[i], subset[i] / n});
  for (std::size_t i = 0; i < map.size(); ++i)
    report.values.push_back({"map", protocol.map_ks[i], map[i] / n});
  return report;
}

}  // namespace

MetricsReport Evaluate(std::span<const EvalRecord> records,
                       const GalleryIndex& index,
                       std::span<const ComposedQuery> queries,
                       const EvalProtocol& protocol) {
  return EvaluateImpl(
      records, [&](std::size_t) -> const GalleryIndex& { return index; },
      queries, protocol);
}

MetricsReport Evaluate(std::span<const EvalRecord> records,
                       std::span<const GalleryIndex> galleries,
                       std::span<const ComposedQuery> queries,
                       const EvalProtocol& protocol) {
  if (galleries.size() != records.size()) {
    throw InputError("evaluate: " + std::to_string(records.size()) +
                     " records but " + std::to_string(galleries.size()) +
                     " galleries");
  }
  return EvaluateImpl(
      records,
      [&](std::size_t q) -> const GalleryIndex& { return galleries[q]; },
      queries, protocol);
}

}  // namespace mcir
