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

#include "mcir/container.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mcir/errors.h"

namespace mcir {

namespace {

constexpr char kMagic[4] = {'M', 'C', 'I', 'R'};

class Writer {
 public:
  void U32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void U64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void F32(float f) { U32(std::bit_cast<std::uint32_t>(f)); }
  void Str(const std::string& s) {
    U32(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void Bytes(std::span<const std::uint8_t> b) {
    out_.insert(out_.end(), b.begin(), b.end());
  }
  std::vector<std::uint8_t>& out() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  std::uint32_t U32() {
    Need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t U64() {
    Need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }
  float F32() { return std::bit_cast<float>(U32()); }
  std::string Str() {
    const std::uint32_t n = U32();
    Need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void Need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError(what_ + ": truncated");
  }

  std::span<const std::uint8_t> bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

Section ParsePayload(const std::string& name,
                     std::span<const std::uint8_t> payload) {
  Reader r(payload, "section '" + name + "'");
  Section s;
  s.name = name;
  const std::uint32_t kind = r.U32();
  if (kind > 1) {
    throw DataError("section '" + name + "': unknown kind " +
                    std::to_string(kind));
  }
  s.kind = static_cast<SectionKind>(kind);
  const std::uint32_t count = r.U32();
  for (std::uint32_t i = 0; i < count; ++i) {
    if (s.kind == SectionKind::kStrings) {
      s.strings.push_back(r.Str());
      continue;
    }
    TensorRecord t;
    t.name = r.Str();
    const std::uint32_t rank = r.U32();
    if (rank == 0) throw DataError("tensor '" + t.name + "' has rank 0");
    std::size_t numel = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const std::uint32_t dim = r.U32();
      if (dim == 0) throw DataError("tensor '" + t.name + "' has a zero dim");
      t.shape.push_back(dim);
      numel *= dim;
      if (numel > payload.size()) {
        throw DataError("tensor '" + t.name + "': dims exceed payload");
      }
    }
    t.values.resize(numel);
    for (float& v : t.values) v = r.F32();
    s.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw DataError("section '" + name + "': trailing bytes");
  return s;
}

}  // namespace

std::uint64_t Fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t hash) {
  for (std::uint8_t b : bytes) {
    hash ^= b;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

TensorRecord TensorRecord::From(const std::string& name, const Tensor& t) {
  TensorRecord r;
  r.name = name;
  r.shape = t.shape();
  r.values.reserve(t.numel());
  for (double v : t.data()) r.values.push_back(static_cast<float>(v));
  return r;
}

Tensor TensorRecord::ToTensor() const {
  return Tensor::FromData(shape, std::vector<double>(values.begin(), values.end()));
}

std::vector<std::uint8_t> Section::Payload() const {
  Writer w;
  w.U32(static_cast<std::uint32_t>(kind));
  if (kind == SectionKind::kStrings) {
    w.U32(static_cast<std::uint32_t>(strings.size()));
    for (const std::string& s : strings) w.Str(s);
  } else {
    w.U32(static_cast<std::uint32_t>(tensors.size()));
    for (const TensorRecord& t : tensors) {
      if (ShapeNumel(t.shape) != t.values.size()) {
        throw ShapeError("tensor '" + t.name + "': shape " +
                         ShapeToString(t.shape) + " vs " +
                         std::to_string(t.values.size()) + " values");
      }
      w.Str(t.name);
      w.U32(static_cast<std::uint32_t>(t.shape.size()));
      for (std::size_t d : t.shape) w.U32(static_cast<std::uint32_t>(d));
      for (float v : t.values) w.F32(v);
    }
  }
  return std::move(w.out());
}

const TensorRecord& Section::FindTensor(const std::string& tensor_name) const {
  for (const TensorRecord& t : tensors) {
    if (t.name == tensor_name) return t;
  }
  throw DataError("section '" + name + "' has no tensor '" + tensor_name + "'");
}

void Container::Add(Section s) {
  if (Has(s.name)) throw InputError("duplicate section '" + s.name + "'");
  sections_.push_back(std::move(s));
}

bool Container::Has(const std::string& name) const {
  for (const Section& s : sections_) {
    if (s.name == name) return true;
  }
  return false;
}

const Section& Container::Get(const std::string& name) const {
  for (const Section& s : sections_) {
    if (s.name == name) return s;
  }
  throw DataError("container has no section '" + name + "'");
}

std::vector<std::uint8_t> Container::Serialize() const {
  std::vector<std::vector<std::uint8_t>> payloads;
  std::size_t header = 12;
  for (const Section& s : sections_) {
    payloads.push_back(s.Payload());
    header += 4 + s.name.size() + 16;
  }
  Writer w;
  w.Bytes(std::span(reinterpret_cast<const std::uint8_t*>(kMagic), 4));
  w.U32(kContainerVersion);
  w.U32(static_cast<std::uint32_t>(sections_.size()));
  std::uint64_t offset = header;
  for (std::size_t i = 0; i < sections_.size(); ++i) {
    w.Str(sections_[i].name);
    w.U64(offset);
    w.U64(payloads[i].size());
    offset += payloads[i].size();
  }
  for (const auto& p : payloads) w.Bytes(p);
  w.U64(Fnv1a64(w.out()));
  return std::move(w.out());
}

Container Container::Parse(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw DataError("not an MCIR container (bad magic)");
  }
  const std::size_t body = bytes.size() - 8;
  Reader trailer(bytes.subspan(body), "checksum");
  if (trailer.U64() != Fnv1a64(bytes.first(body))) {
    throw DataError("container checksum mismatch");
  }
  Reader r(bytes.first(body).subspan(4), "container header");
  const std::uint32_t version = r.U32();
  if (version != kContainerVersion) {
    throw DataError("unsupported container version " + std::to_string(version));
  }
  const std::uint32_t count = r.U32();
  Container c;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.Str();
    const std::uint64_t offset = r.U64();
    const std::uint64_t length = r.U64();
    if (offset > body || length > body - offset) {
      throw DataError("section '" + name + "' lies outside the file");
    }
    c.Add(ParsePayload(name, bytes.subspan(offset, length)));
  }
  return c;
}

void Container::Save(const std::filesystem::path& path) const {
  WriteFileBytes(path, Serialize());
}

Container Container::Load(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = ReadFileBytes(path);
  try {
    return Parse(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<std::pair<std::string, std::string>> ParseKeyValues(
    std::span<const std::string> lines) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const std::string& line : lines) {
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError("malformed key=value record '" + line + "'");
    }
    out.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  return out;
}

std::vector<std::uint8_t> ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

void WriteFileBytes(const std::filesystem::path& path,
                    std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace mcir
