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

// Binary container shared by checkpoints and gallery indices.
// All integers are little-endian.
//
//   "MCIR" | u32 version | u32 section_count
//   section_count x { u32 name_len | name | u64 offset | u64 length }
//   payloads (offset is from the start of the file)
//   u64 FNV-1a-64 of every preceding byte
//
// Payload: u32 kind | u32 count | records
//   kind 0, tensor record: u32 name_len | name | u32 rank | rank x u32 dim |
//                          numel x f32
//   kind 1, string record: u32 len | bytes

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mcir/tensor.h"

namespace mcir {

inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::uint64_t kFnvOffsetBasis = 0xcbf29ce484222325ULL;

std::uint64_t Fnv1a64(std::span<const std::uint8_t> bytes,
                      std::uint64_t hash = kFnvOffsetBasis);

struct TensorRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;

  // Rounds to f32.
  static TensorRecord From(const std::string& name, const Tensor& t);
  Tensor ToTensor() const;

  bool operator==(const TensorRecord&) const = default;
};

enum class SectionKind : std::uint32_t { kTensors = 0, kStrings = 1 };

struct Section {
  std::string name;
  SectionKind kind = SectionKind::kTensors;
  std::vector<TensorRecord> tensors;
  std::vector<std::string> strings;

  std::vector<std::uint8_t> Payload() const;
  // Throws DataError if the named tensor is absent.
  const TensorRecord& FindTensor(const std::string& tensor_name) const;

  bool operator==(const Section&) const = default;
};

class Container {
 public:
  std::vector<Section>& sections() { return sections_; }
  const std::vector<Section>& sections() const { return sections_; }
  void Add(Section s);
  bool Has(const std::string& name) const;
  // Throws DataError if absent.
  const Section& Get(const std::string& name) const;

  std::vector<std::uint8_t> Serialize() const;
  // Throws DataError on bad magic, version, truncation or checksum.
  static Container Parse(std::span<const std::uint8_t> bytes);

  // Throws IoError with the path.
  void Save(const std::filesystem::path& path) const;
  static Container Load(const std::filesystem::path& path);

 private:
  std::vector<Section> sections_;
};

// "key=value" strings <-> ordered pairs; DataError on a line without '='.
std::vector<std::pair<std::string, std::string>> ParseKeyValues(
    std::span<const std::string> lines);

std::vector<std::uint8_t> ReadFileBytes(const std::filesystem::path& path);
void WriteFileBytes(const std::filesystem::path& path,
                    std::span<const std::uint8_t> bytes);

}  // namespace mcir
