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

#include <cmath>

#include "doctest.h"
#include "selfret/bertscore.hpp"
#include "selfret/bm25.hpp"
#include "selfret/embedding.hpp"
#include "selfret/error.hpp"
#include "test_support.hpp"

using namespace selfret;
using namespace selfret::testing;

namespace {

std::vector<Bm25Document> docs_of(const std::vector<TokenSequence>& toks) {
  std::vector<Bm25Document> docs;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "doc%04zu", i);
    docs.push_back({id, toks[i]});
  }
  return docs;
}

std::vector<TokenSequence> random_docs(Rng& rng, std::size_t n,
                                       const std::vector<std::string>& vocab) {
  std::vector<TokenSequence> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(tokenize(random_sentence(rng, vocab, 1, 15)));
  }
  return out;
}

EmbeddingMatrix random_matrix(Rng& rng, std::size_t rows, std::size_t dim) {
  std::vector<float> raw(rows * dim);
  for (auto& x : raw) x = static_cast<float>(rng.uniform(-1, 1));
  return EmbeddingMatrix::from_raw(dim, std::move(raw));
}

TokenSequence dummy_tokens(std::size_t n) {
  TokenSequence t;
  for (std::size_t i = 0; i < n; ++i) t.push_back("t" + std::to_string(i));
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// BM25

TEST_CASE("bm25 hand-computed value") {
  const std::vector<TokenSequence> toks = {{"a", "b", "c"}, {"a", "a", "d"}, {"e", "f"}};
  const auto index = Bm25Index::build(docs_of(toks));
  CHECK(index.avgdl() == doctest::Approx(8.0 / 3.0));
  CHECK(index.document_frequency("a") == 2);
  CHECK(index.idf("a") == doctest::Approx(std::log(1.6)));
  // tf=2, dl=3: 2 * 2.2 / (2 + 1.2 * (0.25 + 0.75 * 3 / (8/3)))
  const double want = std::log(1.6) * 4.4 / (2.0 + 1.2 * (0.25 + 0.75 * 9.0 / 8.0));
  CHECK(index.score({"a"}, "doc0001").f == doctest::Approx(want).epsilon(1e-12));
  CHECK(index.score({"zzz"}, "doc0001").f == 0.0);
  CHECK(index.score({"a"}, "doc0002").f == 0.0);
  const auto s = index.score({"a"}, "doc0000");
  CHECK(s.precision == 0.0);
  CHECK(s.recall == 0.0);
}

TEST_CASE("bm25 matches the naive formula on random corpora") {
  Rng rng(101);
  const auto vocab = make_vocab("v", 30);
  for (int round = 0; round < 20; ++round) {
    const auto toks = random_docs(rng, rng.between(1, 60), vocab);
    const Bm25Params params{rng.uniform(0.0, 2.0), rng.uniform(0.0, 1.0)};
    const auto index = Bm25Index::build(docs_of(toks), params);
    for (int q = 0; q < 20; ++q) {
      const auto query = tokenize(random_sentence(rng, vocab, 1, 6));
      const auto d = rng.below(toks.size());
      const double want = naive_bm25(toks, query, d, params.k1, params.b);
      CHECK(std::abs(index.score_doc(query, d) - want) <= 1e-9);
      CHECK(bm25_score(index, query, index.id_at(d)).f == index.score_doc(query, d));
    }
  }
}

TEST_CASE("bm25 scores are additive over concatenated queries") {
  Rng rng(7);
  const auto vocab = make_vocab("v", 20);
  const auto toks = random_docs(rng, 40, vocab);
  const auto index = Bm25Index::build(docs_of(toks));
  for (int i = 0; i < 200; ++i) {
    auto q1 = tokenize(random_sentence(rng, vocab, 1, 5));
    const auto q2 = tokenize(random_sentence(rng, vocab, 1, 5));
    const auto d = rng.below(toks.size());
    const double sum = index.score_doc(q1, d) + index.score_doc(q2, d);
    q1.insert(q1.end(), q2.begin(), q2.end());
    CHECK(index.score_doc(q1, d) == doctest::Approx(sum).epsilon(1e-12));
    CHECK(index.score_doc(q1, d) >= 0.0);
  }
}

TEST_CASE("bm25 top_m is the sorted prefix of all scores") {
  Rng rng(3);
  const auto vocab = make_vocab("v", 12);
  for (int round = 0; round < 30; ++round) {
    const auto toks = random_docs(rng, rng.between(2, 50), vocab);
    const auto index = Bm25Index::build(docs_of(toks));
    const auto query = tokenize(random_sentence(rng, vocab, 1, 4));
    std::optional<std::size_t> exclude;
    if (rng.chance(0.5)) exclude = rng.below(toks.size());

    std::vector<std::size_t> all;
    for (std::size_t d = 0; d < toks.size(); ++d) {
      if (d != exclude) all.push_back(d);
    }
    std::sort(all.begin(), all.end(), [&](std::size_t a, std::size_t b) {
      const double sa = index.score_doc(query, a), sb = index.score_doc(query, b);
      return sa != sb ? sa > sb : index.id_at(a) < index.id_at(b);
    });
    const std::size_t m = rng.between(1, toks.size() + 3);
    auto got = index.top_m(query, m, exclude);
    const std::size_t want_n = std::min(m, all.size());
    REQUIRE(got.size() == want_n);
    for (std::size_t i = 0; i < want_n; ++i) CHECK(got[i] == all[i]);
  }
}

TEST_CASE("bm25 rejects bad input") {
  std::vector<Bm25Document> dup = {{"x", {"a"}}, {"x", {"b"}}};
  CHECK_THROWS_AS(Bm25Index::build(dup), BuildError);
  std::vector<Bm25Document> one = {{"x", {"a"}}};
  CHECK_THROWS_AS(Bm25Index::build(one, {-0.1, 0.5}), ConfigError);
  CHECK_THROWS_AS(Bm25Index::build(one, {1.2, 1.5}), ConfigError);
  const auto index = bm25_build(one);
  CHECK_THROWS_AS(index.score({"a"}, "nope"), LookupError);
  CHECK(index.find("x") == std::size_t{0});
  CHECK_FALSE(index.find("y"));
}

// ---------------------------------------------------------------------------
// BERTScore

TEST_CASE("bertscore on hand-built vectors") {
  const auto cand = EmbeddingMatrix::from_raw(2, {1, 0, 0, 1});
  const auto ref = EmbeddingMatrix::from_raw(2, {1, 0});
  const auto ct = dummy_tokens(2), rt = dummy_tokens(1);
  const auto s = bertscore({ct, cand.view()}, {rt, ref.view()});
  CHECK(s.precision == doctest::Approx(0.5));
  CHECK(s.recall == doctest::Approx(1.0));
  CHECK(s.f == doctest::Approx(2.0 / 3.0));

  // Opposite vectors: P = R = -1 and f keeps the harmonic mean.
  const auto neg = EmbeddingMatrix::from_raw(2, {-1, 0});
  const auto s2 = bertscore({rt, ref.view()}, {rt, neg.view()});
  CHECK(s2.precision == doctest::Approx(-1.0));
  CHECK(s2.f == doctest::Approx(-1.0));

  // Orthogonal: p + r = 0 gives f = 0.
  const auto up = EmbeddingMatrix::from_raw(2, {0, 1});
  CHECK(bertscore({rt, ref.view()}, {rt, up.view()}).f == 0.0);
}

TEST_CASE("bertscore of a text with itself is 1 and never above") {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const auto m = random_matrix(rng, rng.between(1, 20), 16);
    const auto t = dummy_tokens(m.rows());
    const auto s = bertscore({t, m.view()}, {t, m.view()});
    CHECK(s.precision == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(s.precision <= 1.0);
    CHECK(s.recall == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(s.f == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("bertscore matches brute force within 1e-6") {
  Rng rng(2024);
  for (int i = 0; i < 300; ++i) {
    const std::size_t dim = rng.between(2, 48);
    const auto a = random_matrix(rng, rng.between(1, 25), dim);
    const auto b = random_matrix(rng, rng.between(1, 25), dim);
    const auto at = dummy_tokens(a.rows()), bt = dummy_tokens(b.rows());
    const auto got = bertscore({at, a.view()}, {bt, b.view()});
    const auto want = naive_bertscore(rows_of(a.view()), rows_of(b.view()));
    CHECK(std::abs(got.precision - want.p) <= 1e-6);
    CHECK(std::abs(got.recall - want.r) <= 1e-6);
    CHECK(std::abs(got.f - want.f) <= 1e-6);
    // Swapping sides swaps precision and recall.
    const auto swapped = bertscore({bt, b.view()}, {at, a.view()});
    CHECK(swapped.precision == got.recall);
    CHECK(swapped.recall == got.precision);
    CHECK(got.f >= -1.0);
    CHECK(got.f <= 1.0);
  }
}

TEST_CASE("idf weights") {
  const std::vector<TokenSequence> docs = {{"a", "b"}, {"a", "c", "c"}};
  const auto idf = compute_idf(docs);
  CHECK(idf.weight("a") == doctest::Approx(0.0));
  CHECK(idf.weight("b") == doctest::Approx(std::log(1.5)));
  CHECK(idf.weight("c") == doctest::Approx(std::log(1.5)));
  CHECK(idf.weight("zzz") == doctest::Approx(std::log(3.0)));
}

TEST_CASE("idf-weighted bertscore matches brute force") {
  Rng rng(77);
  const auto vocab = make_vocab("v", 15);
  std::vector<TokenSequence> docs;
  for (int i = 0; i < 30; ++i) docs.push_back(tokenize(random_sentence(rng, vocab, 1, 8)));
  const auto idf = compute_idf(docs);
  const StaticEmbeddingBackend backend(12);
  for (int i = 0; i < 200; ++i) {
    const auto a = tokenize(random_sentence(rng, vocab, 1, 10));
    const auto b = tokenize(random_sentence(rng, vocab, 1, 10));
    const auto am = backend.embed(a), bm = backend.embed(b);
    std::vector<double> aw, bw;
    for (const auto& t : a) aw.push_back(idf.weight(t));
    for (const auto& t : b) bw.push_back(idf.weight(t));
    double asum = 0, bsum = 0;
    for (double w : aw) asum += w;
    for (double w : bw) bsum += w;
    if (asum == 0 || bsum == 0) {
      CHECK_THROWS_AS(bertscore({a, am.view()}, {b, bm.view()}, &idf), ScoreError);
      continue;
    }
    const auto got = bertscore({a, am.view()}, {b, bm.view()}, &idf);
    const auto want = naive_bertscore(rows_of(am.view()), rows_of(bm.view()), &aw, &bw);
    CHECK(std::abs(got.precision - want.p) <= 1e-6);
    CHECK(std::abs(got.recall - want.r) <= 1e-6);
    CHECK(std::abs(got.f - want.f) <= 1e-6);
  }
}

TEST_CASE("bertscore rejects empty sides and dim mismatches") {
  const auto a = EmbeddingMatrix::from_raw(2, {1, 0});
  const auto b = EmbeddingMatrix::from_raw(3, {1, 0, 0});
  const auto empty = EmbeddingMatrix::from_unit_rows(2, {});
  const auto t1 = dummy_tokens(1);
  const TokenSequence none;
  CHECK_THROWS_AS(bertscore({none, empty.view()}, {t1, a.view()}), ScoreError);
  CHECK_THROWS_AS(bertscore({t1, a.view()}, {none, empty.view()}), ScoreError);
  CHECK_THROWS_AS(bertscore({t1, a.view()}, {t1, b.view()}), ScoreError);
}
