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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "selfret/match_score.hpp"
#include "selfret/text.hpp"

namespace selfret {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct Bm25Document {
  std::string id;
  TokenSequence tokens;
};

/// Okapi BM25 over token bags:
///   score(q, d) = sum over query tokens t of
///                 idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))
///   idf(t)      = ln((N - df + 0.5) / (df + 0.5) + 1)
/// Repeated query tokens contribute once per occurrence, so scores add over
/// concatenated queries. Immutable once built.
class Bm25Index {
 public:
  struct Posting {
    std::uint32_t doc;
    std::uint32_t tf;
  };

  /// Throws BuildError on duplicate ids, ConfigError on bad parameters.
  static Bm25Index build(std::span<const Bm25Document> docs,
                         Bm25Params params = {});

  std::size_t size() const { return ids_.size(); }
  double avgdl() const { return avgdl_; }
  const Bm25Params& params() const { return params_; }

  std::optional<std::size_t> find(std::string_view id) const;
  const std::string& id_at(std::size_t doc) const { return ids_[doc]; }
  std::uint32_t doc_length(std::size_t doc) const { return doc_lengths_[doc]; }

  /// Postings of a token in ascending doc order; empty when unseen.
  std::span<const Posting> postings(std::string_view token) const;
  std::size_t document_frequency(std::string_view token) const {
    return postings(token).size();
  }
  double idf(std::string_view token) const;

  /// Throws LookupError for an unknown id.
  MatchScore score(const TokenSequence& query, std::string_view id) const;
  double score_doc(const TokenSequence& query, std::size_t doc) const;

  /// Indices of the best `m` documents for `query`, highest score first and
  /// ties by ascending id. Documents without any query token rank after all
  /// matching ones, so m >= size() returns every document.
  std::vector<std::size_t> top_m(const TokenSequence& query, std::size_t m,
                                 std::optional<std::size_t> exclude = {}) const;

 private:
  struct TermFreq {
    std::uint32_t term;
    std::uint32_t tf;
  };

  std::optional<std::uint32_t> term_id(std::string_view token) const;
  double contribution(std::uint32_t term, std::uint32_t tf,
                      std::size_t doc) const;

  Bm25Params params_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> id_to_doc_;
  std::vector<std::uint32_t> doc_lengths_;
  std::vector<double> length_norm_;  // k1 * (1 - b + b * dl / avgdl)
  std::vector<std::vector<TermFreq>> doc_terms_;  // sorted by term
  std::unordered_map<std::string, std::uint32_t> vocab_;
  std::vector<std::vector<Posting>> postings_;
  std::vector<double> idf_;
  std::vector<std::size_t> docs_by_id_;  // doc indices in ascending id order
  std::vector<std::uint32_t> id_rank_;
  double avgdl_ = 0.0;
};

Bm25Index bm25_build(std::span<const Bm25Document> docs, double k1 = 1.2,
                     double b = 0.75);
MatchScore bm25_score(const Bm25Index& index, const TokenSequence& query,
                      std::string_view doc_id);

}  // namespace selfret
