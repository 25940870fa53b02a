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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "selfret/text.hpp"

namespace selfret {

/// Non-owning row-major view of token embeddings.
struct MatrixView {
  std::span<const float> data;
  std::size_t dim = 0;

  std::size_t rows() const { return dim == 0 ? 0 : data.size() / dim; }
  std::span<const float> row(std::size_t i) const {
    return data.subspan(i * dim, dim);
  }
};

/// One L2-normalized vector of `dim` floats per token.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;

  /// Normalizes every row of `raw` to unit length. Throws FormatError on a
  /// zero or non-finite row, or when raw.size() is not a multiple of dim.
  static EmbeddingMatrix from_raw(std::size_t dim, std::vector<float> raw);
  /// Adopts rows that are already unit length; no renormalization.
  static EmbeddingMatrix from_unit_rows(std::size_t dim,
                                        std::vector<float> rows);

  std::size_t dim() const { return dim_; }
  std::size_t rows() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(data_).subspan(i * dim_, dim_);
  }
  const std::vector<float>& data() const { return data_; }
  MatrixView view() const { return {data_, dim_}; }

  friend bool operator==(const EmbeddingMatrix&,
                         const EmbeddingMatrix&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<float> data_;
};

/// Normalizes `v` in place (double accumulation). Returns false for a zero
/// or non-finite vector, leaving it untouched.
bool normalize_in_place(std::span<float> v);

/// Deterministic fallback vector for tokens missing from a static table:
/// the FNV-1a 64-bit hash of the token bytes seeds a SplitMix64 stream;
/// component i is 2u - 1 with u = (next() >> 11) * 2^-53; the result is
/// L2-normalized.
std::vector<float> hash_seeded_vector(std::string_view token, std::size_t dim);

/// Producer of per-token embeddings for whole sentences.
class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;

  virtual std::size_t dim() const = 0;
  /// Identifies the backend and its weights; part of embedding cache keys.
  virtual std::string backend_id() const = 0;
  virtual EmbeddingMatrix embed(const TokenSequence& tokens) const = 0;
};

inline EmbeddingMatrix embed(const EmbeddingBackend& backend,
                             const TokenSequence& tokens) {
  return backend.embed(tokens);
}

// "EVT1" binary files: magic, dim u32-LE, count u64-LE, then per record
// {key length u16-LE, key bytes, dim x f32-LE}.
struct EmbeddingRecord {
  std::string key;
  std::vector<float> values;
};

struct EmbeddingRecords {
  std::size_t dim = 0;
  std::vector<EmbeddingRecord> records;
};

/// Throws IoError when the file cannot be opened, FormatError on bad content.
EmbeddingRecords read_embedding_records(const std::filesystem::path& path);
void write_embedding_records(const std::filesystem::path& path,
                             std::size_t dim,
                             std::span<const EmbeddingRecord> records);

/// Context-free token table. Unknown tokens get hash_seeded_vector.
class StaticEmbeddingBackend final : public EmbeddingBackend {
 public:
  explicit StaticEmbeddingBackend(std::size_t dim);
  StaticEmbeddingBackend(std::size_t dim,
                         std::span<const EmbeddingRecord> records);

  /// Throws ConfigError when `expected_dim` is set and differs from the file.
  static StaticEmbeddingBackend load(const std::filesystem::path& path,
                                     std::optional<std::size_t> expected_dim);

  std::size_t dim() const override { return dim_; }
  std::string backend_id() const override { return id_; }
  EmbeddingMatrix embed(const TokenSequence& tokens) const override;

  std::size_t table_size() const { return table_.size(); }

 private:
  std::size_t dim_;
  std::unordered_map<std::string, std::vector<float>> table_;
  std::string id_;
};

struct HttpBackendOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t dim = 0;
  std::size_t max_in_flight = 4;
  int retries = 2;
  int timeout_seconds = 30;
  std::string model = "remote";
};

/// Client for an embedding service speaking
///   POST /embed {"tokens": [...]} -> {"dim": n, "vectors": [[...], ...]}.
/// Safe to call concurrently; at most max_in_flight requests are open.
class HttpEmbeddingBackend final : public EmbeddingBackend {
 public:
  explicit HttpEmbeddingBackend(HttpBackendOptions options);
  ~HttpEmbeddingBackend() override;

  std::size_t dim() const override { return options_.dim; }
  std::string backend_id() const override;
  /// Throws TransportError when the service is unreachable or answers
  /// non-200 after all retries, ConfigError on a dimension mismatch.
  EmbeddingMatrix embed(const TokenSequence& tokens) const override;

 private:
  struct Limiter;
  HttpBackendOptions options_;
  std::unique_ptr<Limiter> limiter_;
};

}  // namespace selfret
