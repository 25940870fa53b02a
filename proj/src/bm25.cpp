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

#include "selfret/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "selfret/error.hpp"

namespace selfret {

Bm25Index Bm25Index::build(std::span<const Bm25Document> docs,
                           Bm25Params params) {
  if (!(params.k1 >= 0.0) || !(params.b >= 0.0 && params.b <= 1.0)) {
    throw ConfigError("bm25: require k1 >= 0 and 0 <= b <= 1");
  }
  Bm25Index index;
  index.params_ = params;
  index.ids_.reserve(docs.size());
  index.doc_lengths_.reserve(docs.size());
  index.doc_terms_.reserve(docs.size());

  std::uint64_t total_length = 0;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const auto& doc = docs[d];
    if (!index.id_to_doc_.emplace(doc.id, d).second) {
      throw BuildError("bm25: duplicate document id '" + doc.id + "'");
    }
    index.ids_.push_back(doc.id);
    index.doc_lengths_.push_back(static_cast<std::uint32_t>(doc.tokens.size()));
    total_length += doc.tokens.size();

    std::map<std::uint32_t, std::uint32_t> counts;
    for (const auto& token : doc.tokens) {
      auto [it, inserted] = index.vocab_.emplace(
          token, static_cast<std::uint32_t>(index.postings_.size()));
      if (inserted) index.postings_.emplace_back();
      ++counts[it->second];
    }
    auto& terms = index.doc_terms_.emplace_back();
    terms.reserve(counts.size());
    for (const auto& [term, tf] : counts) {
      terms.push_back({term, tf});
      index.postings_[term].push_back({static_cast<std::uint32_t>(d), tf});
    }
  }

  const double n = static_cast<double>(docs.size());
  index.avgdl_ = docs.empty() ? 0.0 : static_cast<double>(total_length) / n;
  index.length_norm_.reserve(docs.size());
  for (auto dl : index.doc_lengths_) {
    const double ratio = index.avgdl_ > 0.0 ? dl / index.avgdl_ : 0.0;
    index.length_norm_.push_back(params.k1 *
                                 (1.0 - params.b + params.b * ratio));
  }
  index.idf_.reserve(index.postings_.size());
  for (const auto& plist : index.postings_) {
    const double df = static_cast<double>(plist.size());
    index.idf_.push_back(std::log((n - df + 0.5) / (df + 0.5) + 1.0));
  }

  index.docs_by_id_.resize(docs.size());
  std::iota(index.docs_by_id_.begin(), index.docs_by_id_.end(), 0);
  std::sort(index.docs_by_id_.begin(), index.docs_by_id_.end(),
            [&](std::size_t a, std::size_t b) {
              return index.ids_[a] < index.ids_[b];
            });
  index.id_rank_.resize(docs.size());
  for (std::size_t r = 0; r < index.docs_by_id_.size(); ++r) {
    index.id_rank_[index.docs_by_id_[r]] = static_cast<std::uint32_t>(r);
  }
  return index;
}

std::optional<std::size_t> Bm25Index::find(std::string_view id) const {
  auto it = id_to_doc_.find(std::string(id));
  if (it == id_to_doc_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::uint32_t> Bm25Index::term_id(std::string_view token) const {
  auto it = vocab_.find(std::string(token));
  if (it == vocab_.end()) return std::nullopt;
  return it->second;
}

std::span<const Bm25Index::Posting> Bm25Index::postings(
    std::string_view token) const {
  auto term = term_id(token);
  if (!term) return {};
  return postings_[*term];
}

double Bm25Index::idf(std::string_view token) const {
  auto term = term_id(token);
  if (term) return idf_[*term];
  const double n = static_cast<double>(size());
  return std::log((n + 0.5) / 0.5 + 1.0);
}

double Bm25Index::contribution(std::uint32_t term, std::uint32_t tf,
                               std::size_t doc) const {
  const double f = tf;
  return idf_[term] * f * (params_.k1 + 1.0) / (f + length_norm_[doc]);
}

double Bm25Index::score_doc(const TokenSequence& query, std::size_t doc) const {
  const auto& terms = doc_terms_[doc];
  double total = 0.0;
  for (const auto& token : query) {
    auto term = term_id(token);
    if (!term) continue;
    auto it = std::lower_bound(
        terms.begin(), terms.end(), *term,
        [](const TermFreq& tf, std::uint32_t t) { return tf.term < t; });
    if (it == terms.end() || it->term != *term) continue;
    total += contribution(*term, it->tf, doc);
  }
  return total;
}

MatchScore Bm25Index::score(const TokenSequence& query,
                            std::string_view id) const {
  auto doc = find(id);
  if (!doc) {
    throw LookupError("bm25: unknown document id '" + std::string(id) + "'");
  }
  return MatchScore::scalar(score_doc(query, *doc));
}

std::vector<std::size_t> Bm25Index::top_m(
    const TokenSequence& query, std::size_t m,
    std::optional<std::size_t> exclude) const {
  std::vector<double> scores(size(), 0.0);
  std::vector<char> touched(size(), 0);
  std::vector<std::size_t> hits;
  for (const auto& token : query) {
    auto term = term_id(token);
    if (!term) continue;
    for (const auto& p : postings_[*term]) {
      scores[p.doc] += contribution(*term, p.tf, p.doc);
      if (!touched[p.doc]) {
        touched[p.doc] = 1;
        hits.push_back(p.doc);
      }
    }
  }
  if (exclude && *exclude < size() && touched[*exclude]) {
    hits.erase(std::find(hits.begin(), hits.end(), *exclude));
  }

  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return id_rank_[a] < id_rank_[b];
  };
  if (hits.size() > m) {
    std::nth_element(hits.begin(), hits.begin() + static_cast<long>(m),
                     hits.end(), better);
    hits.resize(m);
  }
  std::sort(hits.begin(), hits.end(), better);

  // Pad with non-matching documents, which all score zero.
  for (std::size_t r = 0; hits.size() < m && r < docs_by_id_.size(); ++r) {
    const std::size_t doc = docs_by_id_[r];
    if (touched[doc] || (exclude && doc == *exclude)) continue;
    hits.push_back(doc);
  }
  return hits;
}

Bm25Index bm25_build(std::span<const Bm25Document> docs, double k1, double b) {
  return Bm25Index::build(docs, Bm25Params{k1, b});
}

MatchScore bm25_score(const Bm25Index& index, const TokenSequence& query,
                      std::string_view doc_id) {
  return index.score(query, doc_id);
}

}  // namespace selfret
