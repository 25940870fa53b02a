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

#include "selfret/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_set>

#include "selfret/digest.hpp"
#include "selfret/error.hpp"
#include "selfret/io.hpp"
#include "selfret/parallel.hpp"

namespace selfret {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kC2C: return "c2c";
    case Strategy::kC2R: return "c2r";
    case Strategy::kMix: return "mix";
    case Strategy::kRandom: return "random";
  }
  return "?";
}

std::string_view to_string(EvidenceOrigin o) {
  return o == EvidenceOrigin::kC2C ? "c2c" : "c2r";
}

std::string_view to_string(Scorer s) {
  return s == Scorer::kBertScore ? "bertscore" : "bm25";
}

std::string_view to_string(ContextSide s) {
  return s == ContextSide::kLatestUtterance ? "latest" : "full";
}

Strategy parse_strategy(std::string_view s) {
  if (s == "c2c") return Strategy::kC2C;
  if (s == "c2r") return Strategy::kC2R;
  if (s == "mix") return Strategy::kMix;
  if (s == "random") return Strategy::kRandom;
  throw ConfigError("unknown strategy '" + std::string(s) +
                    "' (expected c2c|c2r|mix|random)");
}

EvidenceOrigin parse_origin(std::string_view s) {
  if (s == "c2c") return EvidenceOrigin::kC2C;
  if (s == "c2r") return EvidenceOrigin::kC2R;
  throw FormatError("unknown evidence strategy '" + std::string(s) + "'");
}

Scorer parse_scorer(std::string_view s) {
  if (s == "bertscore") return Scorer::kBertScore;
  if (s == "bm25") return Scorer::kBm25;
  throw ConfigError("unknown scorer '" + std::string(s) +
                    "' (expected bm25|bertscore)");
}

ContextSide parse_context_side(std::string_view s) {
  if (s == "latest") return ContextSide::kLatestUtterance;
  if (s == "full") return ContextSide::kFullContext;
  throw ConfigError("unknown context side '" + std::string(s) +
                    "' (expected latest|full)");
}

RetrievalConfig RetrievalConfig::for_scorer(Scorer scorer) {
  RetrievalConfig cfg;
  cfg.scorer = scorer;
  if (scorer == Scorer::kBm25) cfg.tau.reset();
  return cfg;
}

void RetrievalConfig::validate() const {
  if (k == 0) throw ConfigError("retrieval: k must be >= 1");
  if (!exact_mode && k > prefetch_m) {
    throw ConfigError("retrieval: k (" + std::to_string(k) +
                      ") exceeds prefetch_m (" + std::to_string(prefetch_m) +
                      ")");
  }
  if (tau) {
    if (std::isnan(*tau)) throw ConfigError("retrieval: tau is NaN");
    if (scorer == Scorer::kBertScore && std::isfinite(*tau) &&
        (*tau < -1.0 || *tau > 1.0)) {
      throw ConfigError("retrieval: bertscore tau must lie in [-1, 1]");
    }
    if (scorer == Scorer::kBm25 && std::isfinite(*tau) && *tau < 0.0) {
      throw ConfigError("retrieval: bm25 tau must be >= 0");
    }
  }
}

// ---------------------------------------------------------------------------
// RetrievalSet

namespace {

TokenSequence context_side_tokens(const DialogueInstance& inst,
                                  ContextSide side) {
  if (side == ContextSide::kLatestUtterance) return inst.latest().tokens;
  TokenSequence all;
  for (const auto& u : inst.context) {
    all.insert(all.end(), u.tokens.begin(), u.tokens.end());
  }
  return all;
}

std::string digest_members(const std::vector<DialogueInstance>& members,
                           ContextSide side) {
  Sha256 h;
  h.update(to_string(side));
  for (const auto& m : members) {
    h.update(m.id);
    h.update(std::string_view("\x1f", 1));
    for (const auto& u : m.context) {
      h.update(u.text);
      h.update(std::string_view("\x1e", 1));
    }
    h.update(m.response.text);
    h.update(std::string_view("\x1d", 1));
  }
  return h.hex_digest();
}

void append_rows(std::vector<float>& rows, std::vector<std::size_t>& offsets,
                 const EmbeddingMatrix& m) {
  rows.insert(rows.end(), m.data().begin(), m.data().end());
  offsets.push_back(offsets.back() + m.rows());
}

}  // namespace

RetrievalSet RetrievalSet::build(const Corpus& train,
                                 std::span<const Corpus> extra,
                                 const EmbeddingBackend* backend,
                                 RetrievalSetOptions options) {
  RetrievalSet set;
  set.options_ = std::move(options);
  set.backend_ = backend;

  std::size_t total = train.size();
  for (const auto& c : extra) total += c.size();
  set.members_.reserve(total);
  set.by_id_.reserve(total);
  auto add_corpus = [&](const Corpus& c) {
    for (const auto& inst : c.instances) {
      if (!set.by_id_.emplace(inst.id, set.members_.size()).second) {
        throw BuildError("retrieval set: id collision on '" + inst.id +
                         "' (corpus '" + c.name + "')");
      }
      set.members_.push_back(inst);
    }
  };
  add_corpus(train);
  for (const auto& c : extra) add_corpus(c);

  std::vector<Bm25Document> ctx_docs;
  std::vector<Bm25Document> resp_docs;
  ctx_docs.reserve(total);
  resp_docs.reserve(total);
  set.context_tokens_.reserve(total);
  for (const auto& m : set.members_) {
    set.context_tokens_.push_back(
        context_side_tokens(m, set.options_.context_side));
    ctx_docs.push_back({m.id, set.context_tokens_.back()});
    resp_docs.push_back({m.id, m.response.tokens});
  }
  set.context_index_ = Bm25Index::build(ctx_docs, set.options_.bm25);
  set.response_index_ = Bm25Index::build(resp_docs, set.options_.bm25);

  {
    std::vector<TokenSequence> idf_docs;
    idf_docs.reserve(2 * total);
    for (std::size_t i = 0; i < total; ++i) {
      idf_docs.push_back(set.context_tokens_[i]);
      idf_docs.push_back(set.members_[i].response.tokens);
    }
    set.idf_ = compute_idf(idf_docs);
  }

  if (!backend) return set;
  set.dim_ = backend->dim();
  const std::string members_digest =
      digest_members(set.members_, set.options_.context_side);
  if (set.options_.cache_dir &&
      set.try_load_cache(*set.options_.cache_dir, members_digest)) {
    set.loaded_from_cache_ = true;
    return set;
  }
  set.embed_members(set.options_.workers);
  if (set.options_.cache_dir) {
    set.write_cache(*set.options_.cache_dir, members_digest);
  } else {
    Sha256 h;
    h.update(std::string_view(reinterpret_cast<const char*>(set.context_rows_.data()),
                              set.context_rows_.size() * sizeof(float)));
    h.update(std::string_view(reinterpret_cast<const char*>(set.response_rows_.data()),
                              set.response_rows_.size() * sizeof(float)));
    set.cache_digest_ = h.hex_digest();
  }
  return set;
}

void RetrievalSet::embed_members(std::size_t workers) {
  const std::size_t n = members_.size();
  std::vector<EmbeddingMatrix> ctx(n);
  std::vector<EmbeddingMatrix> resp(n);
  parallel_for(n, workers, [&](std::size_t i) {
    ctx[i] = backend_->embed(context_tokens_[i]);
    resp[i] = backend_->embed(members_[i].response.tokens);
    if (ctx[i].rows() != context_tokens_[i].size() ||
        resp[i].rows() != members_[i].response.tokens.size()) {
      throw BuildError("retrieval set: backend returned wrong row count for '" +
                       members_[i].id + "'");
    }
    if (ctx[i].dim() != dim_ || resp[i].dim() != dim_) {
      throw ConfigError("retrieval set: embedding dim mismatch for '" +
                        members_[i].id + "'");
    }
  });
  context_rows_.clear();
  response_rows_.clear();
  context_offsets_.assign(1, 0);
  response_offsets_.assign(1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    append_rows(context_rows_, context_offsets_, ctx[i]);
    append_rows(response_rows_, response_offsets_, resp[i]);
  }
}

namespace {

std::vector<EmbeddingRecord> to_records(
    const std::vector<DialogueInstance>& members, const std::vector<float>& rows,
    const std::vector<std::size_t>& offsets, std::size_t dim) {
  std::vector<EmbeddingRecord> recs;
  recs.reserve(offsets.back());
  for (std::size_t i = 0; i < members.size(); ++i) {
    for (std::size_t r = offsets[i]; r < offsets[i + 1]; ++r) {
      recs.push_back({members[i].id,
                      std::vector<float>(rows.begin() + static_cast<long>(r * dim),
                                         rows.begin() + static_cast<long>((r + 1) * dim))});
    }
  }
  return recs;
}

// Rebuilds the row/offset arrays from records keyed by member id, in member
// order with `expected_rows(i)` consecutive rows each.
template <typename RowCount>
bool from_records(const EmbeddingRecords& recs,
                  const std::vector<DialogueInstance>& members,
                  std::size_t dim, RowCount expected_rows,
                  std::vector<float>& rows, std::vector<std::size_t>& offsets) {
  if (recs.dim != dim) return false;
  rows.clear();
  offsets.assign(1, 0);
  std::size_t r = 0;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const std::size_t count = expected_rows(i);
    for (std::size_t c = 0; c < count; ++c, ++r) {
      if (r >= recs.records.size() || recs.records[r].key != members[i].id) {
        return false;
      }
      rows.insert(rows.end(), recs.records[r].values.begin(),
                  recs.records[r].values.end());
    }
    offsets.push_back(offsets.back() + count);
  }
  return r == recs.records.size();
}

std::string cache_files_digest(const std::filesystem::path& dir) {
  Sha256 h;
  h.update(read_file(dir / "context.evt"));
  h.update(read_file(dir / "response.evt"));
  return h.hex_digest();
}

}  // namespace

bool RetrievalSet::try_load_cache(const std::filesystem::path& dir,
                                  const std::string& members_digest) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) return false;
  try {
    const auto manifest = nlohmann::json::parse(read_file(manifest_path));
    if (manifest.at("backend_id").get<std::string>() != backend_->backend_id() ||
        manifest.at("dim").get<std::size_t>() != dim_ ||
        manifest.at("count").get<std::size_t>() != members_.size() ||
        manifest.at("members_digest").get<std::string>() != members_digest) {
      return false;
    }
    const std::string digest = cache_files_digest(dir);
    if (manifest.at("digest").get<std::string>() != digest) return false;
    const auto ctx = read_embedding_records(dir / "context.evt");
    const auto resp = read_embedding_records(dir / "response.evt");
    const bool ok =
        from_records(ctx, members_, dim_,
                     [&](std::size_t i) { return context_tokens_[i].size(); },
                     context_rows_, context_offsets_) &&
        from_records(resp, members_, dim_,
                     [&](std::size_t i) { return members_[i].response.tokens.size(); },
                     response_rows_, response_offsets_);
    if (!ok) return false;
    cache_digest_ = digest;
    return true;
  } catch (const nlohmann::json::exception&) {
    return false;
  } catch (const FormatError&) {
    return false;
  }
}

void RetrievalSet::write_cache(const std::filesystem::path& dir,
                               const std::string& members_digest) {
  std::filesystem::create_directories(dir);
  const auto ctx = to_records(members_, context_rows_, context_offsets_, dim_);
  const auto resp = to_records(members_, response_rows_, response_offsets_, dim_);
  write_embedding_records(dir / "context.evt", dim_, ctx);
  write_embedding_records(dir / "response.evt", dim_, resp);
  cache_digest_ = cache_files_digest(dir);
  nlohmann::ordered_json manifest = {
      {"backend_id", backend_->backend_id()},
      {"dim", dim_},
      {"count", members_.size()},
      {"digest", cache_digest_},
      {"members_digest", members_digest},
      {"context_side", to_string(options_.context_side)},
  };
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::optional<std::size_t> RetrievalSet::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

MatrixView RetrievalSet::context_embedding(std::size_t i) const {
  const auto begin = context_offsets_[i] * dim_;
  const auto end = context_offsets_[i + 1] * dim_;
  return {std::span<const float>(context_rows_).subspan(begin, end - begin), dim_};
}

MatrixView RetrievalSet::response_embedding(std::size_t i) const {
  const auto begin = response_offsets_[i] * dim_;
  const auto end = response_offsets_[i + 1] * dim_;
  return {std::span<const float>(response_rows_).subspan(begin, end - begin), dim_};
}

RetrievalSet build_retrieval_set(const Corpus& train,
                                 std::span<const Corpus> extra,
                                 const EmbeddingBackend* backend,
                                 RetrievalSetOptions options) {
  return RetrievalSet::build(train, extra, backend, std::move(options));
}

// ---------------------------------------------------------------------------
// Queries

PreparedQuery::PreparedQuery(const DialogueInstance& query,
                             const RetrievalSet& set, Scorer scorer)
    : query_(&query) {
  if (query.context.empty()) {
    throw RetrievalError("query '" + query.id + "' has an empty context");
  }
  if (set.size() == 0) throw RetrievalError("retrieval set is empty");
  self_ = set.find(query.id);
  if (scorer != Scorer::kBertScore) return;
  if (!set.has_embeddings()) {
    throw RetrievalError("bertscore retrieval needs an embedding backend");
  }
  // A member query already has its latest utterance embedded.
  if (self_ && set.options().context_side == ContextSide::kLatestUtterance &&
      set.member(*self_).latest().text == query.latest().text) {
    cached_ = set.context_embedding(*self_);
    use_cached_ = true;
  } else {
    owned_ = set.backend()->embed(query.latest().tokens);
  }
}

MatrixView PreparedQuery::embedding() const {
  return use_cached_ ? cached_ : owned_.view();
}

MatchScore score_member(const PreparedQuery& query, const RetrievalSet& set,
                        std::size_t member, EvidenceOrigin side,
                        const RetrievalConfig& cfg) {
  if (cfg.scorer == Scorer::kBm25) {
    const auto& index = side == EvidenceOrigin::kC2C ? set.context_index()
                                                      : set.response_index();
    return MatchScore::scalar(index.score_doc(query.tokens(), member));
  }
  const EmbeddedText q{query.tokens(), query.embedding()};
  const EmbeddedText m =
      side == EvidenceOrigin::kC2C
          ? EmbeddedText{set.context_tokens(member), set.context_embedding(member)}
          : EmbeddedText{set.member(member).response.tokens,
                         set.response_embedding(member)};
  return bertscore(q, m, cfg.use_idf ? &set.idf() : nullptr);
}

void rank_evidences(std::vector<Evidence>& evidences, std::size_t k) {
  auto better = [](const Evidence& a, const Evidence& b) {
    if (a.score.f != b.score.f) return a.score.f > b.score.f;
    return a.source_id < b.source_id;
  };
  if (evidences.size() > k) {
    std::partial_sort(evidences.begin(), evidences.begin() + static_cast<long>(k),
                      evidences.end(), better);
    evidences.resize(k);
  } else {
    std::sort(evidences.begin(), evidences.end(), better);
  }
  for (std::size_t i = 0; i < evidences.size(); ++i) evidences[i].rank = i + 1;
}

namespace {

Evidence make_evidence(const RetrievalSet& set, std::size_t member,
                       MatchScore score, EvidenceOrigin origin) {
  const auto& m = set.member(member);
  return {m.id, m.response.text, score, origin, 0};
}

std::vector<Evidence> retrieve_side(const PreparedQuery& query,
                                    const RetrievalSet& set,
                                    const RetrievalConfig& cfg,
                                    EvidenceOrigin side) {
  std::vector<std::size_t> candidates;
  if (cfg.exact_mode) {
    candidates.reserve(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (query.self() != i) candidates.push_back(i);
    }
  } else {
    const auto& index = side == EvidenceOrigin::kC2C ? set.context_index()
                                                      : set.response_index();
    candidates = index.top_m(query.tokens(), cfg.prefetch_m, query.self());
  }
  std::vector<Evidence> out;
  out.reserve(candidates.size());
  for (auto c : candidates) {
    out.push_back(make_evidence(set, c, score_member(query, set, c, side, cfg), side));
  }
  rank_evidences(out, cfg.k);
  return out;
}

}  // namespace

std::vector<Evidence> retrieve_c2c(const DialogueInstance& query,
                                   const RetrievalSet& set,
                                   const RetrievalConfig& cfg) {
  cfg.validate();
  const PreparedQuery q(query, set, cfg.scorer);
  return retrieve_side(q, set, cfg, EvidenceOrigin::kC2C);
}

std::vector<Evidence> retrieve_c2r(const DialogueInstance& query,
                                   const RetrievalSet& set,
                                   const RetrievalConfig& cfg) {
  cfg.validate();
  const PreparedQuery q(query, set, cfg.scorer);
  return retrieve_side(q, set, cfg, EvidenceOrigin::kC2R);
}

std::vector<Evidence> merge_mix(std::span<const Evidence> c2c,
                                std::span<const Evidence> c2r, std::size_t k) {
  std::vector<Evidence> pool;
  std::unordered_map<std::string, std::size_t> slot;
  pool.reserve(c2c.size() + c2r.size());
  for (auto list : {c2c, c2r}) {
    for (const auto& e : list) {
      auto [it, inserted] = slot.emplace(e.source_id, pool.size());
      if (inserted) {
        pool.push_back(e);
      } else if (e.score.f > pool[it->second].score.f) {
        pool[it->second] = e;
      }
    }
  }
  rank_evidences(pool, k);
  return pool;
}

std::vector<Evidence> retrieve_mix(const DialogueInstance& query,
                                   const RetrievalSet& set,
                                   const RetrievalConfig& cfg) {
  cfg.validate();
  const PreparedQuery q(query, set, cfg.scorer);
  const auto c2c = retrieve_side(q, set, cfg, EvidenceOrigin::kC2C);
  const auto c2r = retrieve_side(q, set, cfg, EvidenceOrigin::kC2R);
  return merge_mix(c2c, c2r, cfg.k);
}

std::vector<Evidence> retrieve_random(const DialogueInstance& query,
                                      const RetrievalSet& set,
                                      const RetrievalConfig& cfg,
                                      std::uint64_t seed) {
  cfg.validate();
  const PreparedQuery q(query, set, cfg.scorer);
  const std::size_t n = set.size() - (q.self() ? 1 : 0);
  const std::size_t k = std::min(cfg.k, n);

  // Floyd's sampling over candidate slots; slot s maps to member s, skipping
  // the query's own position.
  std::mt19937_64 engine(seed ^ fnv1a64(query.id));
  std::unordered_set<std::size_t> picked;
  std::vector<std::size_t> order;
  for (std::size_t j = n - k; j < n; ++j) {
    const auto t = static_cast<std::size_t>(uniform_below(j + 1, engine));
    const std::size_t slot = picked.count(t) ? j : t;
    picked.insert(slot);
    order.push_back(slot);
  }
  std::vector<Evidence> out;
  out.reserve(k);
  for (auto slot : order) {
    const std::size_t member = (q.self() && slot >= *q.self()) ? slot + 1 : slot;
    out.push_back(make_evidence(
        set, member, score_member(q, set, member, EvidenceOrigin::kC2C, cfg),
        EvidenceOrigin::kC2C));
  }
  rank_evidences(out, k);
  return out;
}

std::vector<Evidence> retrieve(const DialogueInstance& query,
                               const RetrievalSet& set,
                               const RetrievalConfig& cfg) {
  switch (cfg.strategy) {
    case Strategy::kC2C: return retrieve_c2c(query, set, cfg);
    case Strategy::kC2R: return retrieve_c2r(query, set, cfg);
    case Strategy::kMix: return retrieve_mix(query, set, cfg);
    case Strategy::kRandom: return retrieve_random(query, set, cfg, cfg.seed);
  }
  throw ConfigError("unknown strategy");
}

std::vector<Evidence> apply_filter(std::vector<Evidence> evidences,
                                   std::optional<double> tau) {
  if (!tau) return evidences;
  std::erase_if(evidences, [&](const Evidence& e) { return !(e.score.f >= *tau); });
  return evidences;
}

}  // namespace selfret
