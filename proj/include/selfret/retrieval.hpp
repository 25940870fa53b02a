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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "selfret/bertscore.hpp"
#include "selfret/bm25.hpp"
#include "selfret/corpus.hpp"
#include "selfret/embedding.hpp"
#include "selfret/match_score.hpp"

namespace selfret {

enum class Strategy { kC2C, kC2R, kMix, kRandom };
enum class EvidenceOrigin { kC2C, kC2R };
enum class Scorer { kBertScore, kBm25 };

/// What a member contributes on the context side: its latest utterance
/// (default, same shape as the query) or its whole context.
enum class ContextSide { kLatestUtterance, kFullContext };

std::string_view to_string(Strategy s);
std::string_view to_string(EvidenceOrigin o);
std::string_view to_string(Scorer s);
std::string_view to_string(ContextSide s);
Strategy parse_strategy(std::string_view s);
EvidenceOrigin parse_origin(std::string_view s);
Scorer parse_scorer(std::string_view s);
ContextSide parse_context_side(std::string_view s);

struct RetrievalConfig {
  std::size_t k = 8;
  Strategy strategy = Strategy::kMix;
  /// Filter threshold on score.f; unset disables filtering.
  std::optional<double> tau = 0.4;
  std::size_t prefetch_m = 100;
  /// Score every member instead of re-ranking a BM25 candidate pool.
  bool exact_mode = false;
  Scorer scorer = Scorer::kBertScore;
  bool use_idf = false;
  /// Seed for the random-evidence baseline.
  std::uint64_t seed = 0;

  /// Default config for a scorer: BM25 runs unfiltered.
  static RetrievalConfig for_scorer(Scorer scorer);
  /// Throws ConfigError.
  void validate() const;
};

struct Evidence {
  std::string source_id;
  std::string text;
  MatchScore score;
  EvidenceOrigin strategy = EvidenceOrigin::kC2C;
  std::size_t rank = 0;

  friend bool operator==(const Evidence&, const Evidence&) = default;
};

struct RetrievalSetOptions {
  ContextSide context_side = ContextSide::kLatestUtterance;
  Bm25Params bm25;
  std::size_t workers = 1;
  /// When set, member embeddings are loaded from / persisted to this
  /// directory (context.evt, response.evt, manifest.json).
  std::optional<std::filesystem::path> cache_dir;
};

/// Members available for retrieval plus their side indices and embeddings.
/// Leave-one-out is applied per query, by id, at retrieval time.
class RetrievalSet {
 public:
  /// Throws BuildError on an id collision across train and extra pools.
  /// `backend` may be null, which limits the set to the BM25 scorer.
  static RetrievalSet build(const Corpus& train, std::span<const Corpus> extra,
                            const EmbeddingBackend* backend,
                            RetrievalSetOptions options = {});

  RetrievalSet(RetrievalSet&&) = default;
  RetrievalSet& operator=(RetrievalSet&&) = default;

  std::size_t size() const { return members_.size(); }
  const DialogueInstance& member(std::size_t i) const { return members_[i]; }
  std::optional<std::size_t> find(std::string_view id) const;

  const RetrievalSetOptions& options() const { return options_; }
  const Bm25Index& context_index() const { return context_index_; }
  const Bm25Index& response_index() const { return response_index_; }
  /// Token sequence indexed and embedded for member i on the context side.
  const TokenSequence& context_tokens(std::size_t i) const {
    return context_tokens_[i];
  }

  bool has_embeddings() const { return backend_ != nullptr; }
  const EmbeddingBackend* backend() const { return backend_; }
  MatrixView context_embedding(std::size_t i) const;
  MatrixView response_embedding(std::size_t i) const;
  const IdfWeights& idf() const { return idf_; }

  /// SHA-256 over the persisted embedding files (empty without a backend).
  const std::string& cache_digest() const { return cache_digest_; }
  bool loaded_from_cache() const { return loaded_from_cache_; }

 private:
  RetrievalSet() = default;

  void embed_members(std::size_t workers);
  bool try_load_cache(const std::filesystem::path& dir,
                      const std::string& members_digest);
  void write_cache(const std::filesystem::path& dir,
                   const std::string& members_digest);

  RetrievalSetOptions options_;
  std::vector<DialogueInstance> members_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::vector<TokenSequence> context_tokens_;
  Bm25Index context_index_;
  Bm25Index response_index_;
  const EmbeddingBackend* backend_ = nullptr;
  std::size_t dim_ = 0;
  std::vector<float> context_rows_;
  std::vector<std::size_t> context_offsets_;  // row offsets, size()+1 entries
  std::vector<float> response_rows_;
  std::vector<std::size_t> response_offsets_;
  IdfWeights idf_;
  std::string cache_digest_;
  bool loaded_from_cache_ = false;
};

RetrievalSet build_retrieval_set(const Corpus& train,
                                 std::span<const Corpus> extra,
                                 const EmbeddingBackend* backend,
                                 RetrievalSetOptions options = {});

/// Query-side state shared by every strategy for one dialogue instance.
class PreparedQuery {
 public:
  /// Throws RetrievalError on an empty context or an empty retrieval set.
  PreparedQuery(const DialogueInstance& query, const RetrievalSet& set,
                Scorer scorer);

  const DialogueInstance& instance() const { return *query_; }
  const TokenSequence& tokens() const { return query_->latest().tokens; }
  std::optional<std::size_t> self() const { return self_; }
  MatrixView embedding() const;

 private:
  const DialogueInstance* query_;
  std::optional<std::size_t> self_;
  EmbeddingMatrix owned_;
  MatrixView cached_;
  bool use_cached_ = false;
};

/// Score of the query's latest utterance against member `i`, on the
/// member's context side (C2C) or response side (C2R).
MatchScore score_member(const PreparedQuery& query, const RetrievalSet& set,
                        std::size_t member, EvidenceOrigin side,
                        const RetrievalConfig& cfg);

/// Top-k members by score(query, member context), reported as their
/// responses. Descending score, ties by ascending source id; the query's
/// own id never appears.
std::vector<Evidence> retrieve_c2c(const DialogueInstance& query,
                                   const RetrievalSet& set,
                                   const RetrievalConfig& cfg);
/// As retrieve_c2c, scored against member responses.
std::vector<Evidence> retrieve_c2r(const DialogueInstance& query,
                                   const RetrievalSet& set,
                                   const RetrievalConfig& cfg);
/// Union of the c2c and c2r top-k lists, one entry per source (higher
/// score wins, c2c on ties), re-ranked and cut to k.
std::vector<Evidence> retrieve_mix(const DialogueInstance& query,
                                   const RetrievalSet& set,
                                   const RetrievalConfig& cfg);
/// k members drawn uniformly without replacement (never the query), each
/// carrying its actual c2c score, ranked like the other strategies.
std::vector<Evidence> retrieve_random(const DialogueInstance& query,
                                      const RetrievalSet& set,
                                      const RetrievalConfig& cfg,
                                      std::uint64_t seed);

/// Dispatches on cfg.strategy (random uses cfg.seed). No filtering.
std::vector<Evidence> retrieve(const DialogueInstance& query,
                               const RetrievalSet& set,
                               const RetrievalConfig& cfg);

/// The mix merge on already-ranked lists.
std::vector<Evidence> merge_mix(std::span<const Evidence> c2c,
                                std::span<const Evidence> c2r, std::size_t k);

/// Sorts by descending f then ascending source id, keeps k, numbers ranks.
void rank_evidences(std::vector<Evidence>& evidences, std::size_t k);

/// Evidences with score.f >= tau, order kept. Unset tau keeps everything.
std::vector<Evidence> apply_filter(std::vector<Evidence> evidences,
                                   std::optional<double> tau);

}  // namespace selfret
