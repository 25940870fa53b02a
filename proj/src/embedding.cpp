/*
 * Copyright 2026 The selfret Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "selfret/embedding.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "selfret/digest.hpp"
#include "selfret/error.hpp"

namespace selfret {

bool normalize_in_place(std::span<float> v) {
  double sq = 0.0;
  for (float x : v) sq += static_cast<double>(x) * x;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) return false;
  for (float& x : v) x = static_cast<float>(x / norm);
  return true;
}

EmbeddingMatrix EmbeddingMatrix::from_raw(std::size_t dim,
                                          std::vector<float> raw) {
  if (dim == 0 || raw.size() % dim != 0) {
    throw FormatError("embedding: data size is not a multiple of dim");
  }
  for (std::size_t off = 0; off < raw.size(); off += dim) {
    if (!normalize_in_place(std::span<float>(raw).subspan(off, dim))) {
      throw FormatError("embedding: zero or non-finite vector at row " +
                        std::to_string(off / dim));
    }
  }
  EmbeddingMatrix m;
  m.dim_ = dim;
  m.data_ = std::move(raw);
  return m;
}

EmbeddingMatrix EmbeddingMatrix::from_unit_rows(std::size_t dim,
                                                std::vector<float> rows) {
  if (dim == 0 || rows.size() % dim != 0) {
    throw FormatError("embedding: data size is not a multiple of dim");
  }
  EmbeddingMatrix m;
  m.dim_ = dim;
  m.data_ = std::move(rows);
  return m;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T get_le(const unsigned char* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<T>(p[i]) << (8 * i);
  }
  return v;
}

constexpr char kMagic[4] = {'E', 'V', 'T', '1'};

}  // namespace

std::vector<float> hash_seeded_vector(std::string_view token, std::size_t dim) {
  std::uint64_t state = fnv1a64(token);
  std::vector<float> v(dim);
  for (auto& x : v) {
    const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
    x = static_cast<float>(2.0 * u - 1.0);
  }
  if (!normalize_in_place(v) && dim > 0) {
    std::fill(v.begin(), v.end(), 0.0f);
    v[0] = 1.0f;
  }
  return v;
}

EmbeddingRecords read_embedding_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputMissingError(path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();
  auto fail = [&](const std::string& what) {
    return FormatError("embedding file '" + path.string() + "': " + what);
  };
  if (size < 16 || std::memcmp(p, kMagic, 4) != 0) throw fail("bad header");

  EmbeddingRecords out;
  out.dim = get_le<std::uint32_t>(p + 4);
  const auto count = get_le<std::uint64_t>(p + 8);
  if (out.dim == 0) throw fail("zero dimension");
  std::size_t pos = 16;
  const std::size_t vec_bytes = out.dim * 4;
  out.records.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
  for (std::uint64_t r = 0; r < count; ++r) {
    if (pos + 2 > size) throw fail("truncated record " + std::to_string(r));
    const auto key_len = get_le<std::uint16_t>(p + pos);
    pos += 2;
    if (pos + key_len + vec_bytes > size) {
      throw fail("truncated record " + std::to_string(r));
    }
    EmbeddingRecord rec;
    rec.key.assign(bytes.data() + pos, key_len);
    pos += key_len;
    rec.values.resize(out.dim);
    for (std::size_t i = 0; i < out.dim; ++i) {
      rec.values[i] = std::bit_cast<float>(get_le<std::uint32_t>(p + pos));
      pos += 4;
    }
    out.records.push_back(std::move(rec));
  }
  if (pos != size) throw fail("trailing bytes after last record");
  return out;
}

void write_embedding_records(const std::filesystem::path& path,
                             std::size_t dim,
                             std::span<const EmbeddingRecord> records) {
  std::string out;
  out.append(kMagic, 4);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim));
  put_le<std::uint64_t>(out, records.size());
  for (const auto& rec : records) {
    if (rec.key.size() > 0xFFFF) {
      throw FormatError("embedding key longer than 65535 bytes");
    }
    if (rec.values.size() != dim) {
      throw FormatError("embedding record '" + rec.key + "' has wrong dim");
    }
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(rec.key.size()));
    out += rec.key;
    for (float x : rec.values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(x));
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write embedding file '" + path.string() + "'");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("short write to '" + path.string() + "'");
}

StaticEmbeddingBackend::StaticEmbeddingBackend(std::size_t dim)
    : StaticEmbeddingBackend(dim, {}) {}

StaticEmbeddingBackend::StaticEmbeddingBackend(
    std::size_t dim, std::span<const EmbeddingRecord> records)
    : dim_(dim) {
  if (dim_ == 0) throw ConfigError("static embedding backend: dim must be > 0");
  Sha256 h;
  for (const auto& rec : records) {
    if (rec.values.size() != dim_) {
      throw ConfigError("static embedding backend: token '" + rec.key +
                        "' has dim " + std::to_string(rec.values.size()) +
                        ", expected " + std::to_string(dim_));
    }
    std::vector<float> v = rec.values;
    if (!normalize_in_place(v)) {
      throw FormatError("static embedding backend: zero vector for '" +
                        rec.key + "'");
    }
    h.update(rec.key);
    h.update(std::string_view(reinterpret_cast<const char*>(v.data()),
                              v.size() * sizeof(float)));
    table_[rec.key] = std::move(v);
  }
  id_ = "static:" + std::to_string(dim_) + ":" + h.hex_digest().substr(0, 16);
}

StaticEmbeddingBackend StaticEmbeddingBackend::load(
    const std::filesystem::path& path, std::optional<std::size_t> expected_dim) {
  auto recs = read_embedding_records(path);
  if (expected_dim && *expected_dim != recs.dim) {
    throw ConfigError("embedding table '" + path.string() + "' has dim " +
                      std::to_string(recs.dim) + ", configured dim is " +
                      std::to_string(*expected_dim));
  }
  return StaticEmbeddingBackend(recs.dim, recs.records);
}

EmbeddingMatrix StaticEmbeddingBackend::embed(const TokenSequence& tokens) const {
  std::vector<float> data;
  data.reserve(tokens.size() * dim_);
  for (const auto& token : tokens) {
    auto it = table_.find(token);
    if (it != table_.end()) {
      data.insert(data.end(), it->second.begin(), it->second.end());
    } else {
      auto v = hash_seeded_vector(token, dim_);
      data.insert(data.end(), v.begin(), v.end());
    }
  }
  return EmbeddingMatrix::from_unit_rows(dim_, std::move(data));
}

}  // namespace selfret
