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

#include <numeric>
#include <set>
#include <sstream>

#include "doctest.h"
#include "selfret/corpus.hpp"
#include "selfret/error.hpp"
#include "selfret/io.hpp"
#include "test_support.hpp"

using namespace selfret;
using namespace selfret::testing;

namespace {

RawRecord rec(std::string id, std::optional<std::string> parent,
              std::optional<std::string> text) {
  return {std::move(id), std::move(parent), std::move(text), "u"};
}

std::vector<std::string> ids_of(const Corpus& c) {
  std::vector<std::string> out;
  for (const auto& i : c.instances) out.push_back(i.id);
  return out;
}

}  // namespace

TEST_CASE("chain ingest flattens every reply path") {
  // root -> a -> b, root -> c
  const std::vector<RawRecord> raw = {
      rec("r", std::nullopt, "Hi there"),
      rec("a", "r", "hello!"),
      rec("b", "a", "How are you?"),
      rec("c", "r", "yo"),
  };
  const auto res = ingest_reddit_chains(raw, "reddit", {});
  CHECK(res.report.read == 4);
  CHECK(res.report.emitted == 3);
  CHECK(res.report.skipped_malformed == 0);
  REQUIRE(res.corpus.size() == 3);

  const auto& b = res.corpus.instances[1];
  CHECK(b.id == "reddit:b");
  CHECK(b.source_tag == "reddit");
  REQUIRE(b.context.size() == 2);
  CHECK(b.context[0].text == "Hi there");
  CHECK(b.context[0].speaker == Speaker::kOne);
  CHECK(b.context[1].speaker == Speaker::kTwo);
  CHECK(b.response.speaker == Speaker::kOne);
  CHECK(b.response.tokens == TokenSequence{"how", "are", "you", "?"});
  CHECK(res.corpus.instances[2].context.size() == 1);
  for (const auto& inst : res.corpus.instances) validate_instance(inst);
}

TEST_CASE("malformed records are skipped and counted") {
  const std::vector<RawRecord> raw = {
      rec("r", std::nullopt, "root"),
      rec("x", "r", std::nullopt),   // no text
      rec("y", "r", "   \t"),        // blank
      rec("r", std::nullopt, "dup"), // duplicate id
      rec("", "r", "no id"),
      rec("z", "ghost", "dangling"),
      rec("w", "y", "child of a skipped node"),
      rec("ok", "r", "fine"),
  };
  const auto res = ingest_reddit_chains(raw, "s", {});
  CHECK(res.report.read == 8);
  CHECK(res.report.skipped_malformed == 6);
  CHECK(res.report.emitted == 1);
  CHECK(ids_of(res.corpus) == std::vector<std::string>{"s:ok"});
  CHECK(res.report.read ==
        res.report.emitted + res.report.skipped_malformed +
            res.report.discarded_by_limits + 1);  // the root emits nothing
}

TEST_CASE("limits discard long paths and long utterances") {
  std::vector<RawRecord> raw = {rec("0", std::nullopt, "t0")};
  for (int i = 1; i <= 5; ++i) {
    raw.push_back(rec(std::to_string(i), std::to_string(i - 1), "t" + std::to_string(i)));
  }
  raw.push_back(rec("long", "0", "one two three four five"));
  const auto res = ingest_reddit_chains(raw, "s", {3, 4});
  // contexts of length 1..5; only 1..3 pass, "long" has 5 tokens
  CHECK(res.report.emitted == 3);
  CHECK(res.report.discarded_by_limits == 3);
  for (const auto& inst : res.corpus.instances) {
    CHECK(inst.context.size() <= 3);
  }
  CHECK_THROWS_AS(ingest_reddit_chains(raw, "s", {0, 4}), ConfigError);
}

TEST_CASE("JSONL chain stream") {
  std::istringstream in(
      R"({"thread_id":"1","parent_id":null,"text":"root","author":"a"})" "\n"
      "\n"
      R"({"thread_id":"2","parent_id":"1","text":"reply"})" "\r\n"
      R"({"thread_id":"3","parent_id":7,"text":"bad parent"})" "\n"
      R"({"thread_id":"4","text":42})" "\n");
  const auto res = ingest_reddit_chains(in, "reddit", {});
  CHECK(res.report.read == 4);
  CHECK(res.report.emitted == 1);
  CHECK(res.report.skipped_malformed == 2);
  CHECK(res.corpus.instances[0].response.text == "reply");

  std::istringstream corrupt("{\"thread_id\":\"1\"}\n{not json\n");
  CHECK_THROWS_AS(ingest_reddit_chains(corrupt, "r", {}), IngestError);
  std::istringstream arr("[1,2]\n");
  CHECK_THROWS_AS(ingest_reddit_chains(arr, "r", {}), IngestError);
  std::istringstream empty("");
  const auto none = ingest_reddit_chains(empty, "r", {});
  CHECK(none.report.read == 0);
  CHECK(none.corpus.empty());
}

TEST_CASE("session stream becomes one instance per reply turn") {
  std::istringstream in(
      R"({"id":"m1","turns":["A","B","C"]})" "\n"
      R"({"id":"m2","turns":["only"]})" "\n"
      R"({"turns":["no id"]})" "\n");
  const auto res = ingest_sessions(in, "movie", {});
  CHECK(ids_of(res.corpus) == std::vector<std::string>{"movie:m1#1", "movie:m1#2"});
  CHECK(res.corpus.instances[1].context.size() == 2);
  CHECK(res.report.skipped_malformed == 1);
}

TEST_CASE("preprocess keeps instances inside the limits") {
  Rng rng(9);
  SynthOptions o;
  o.max_turns = 6;
  o.max_len = 20;
  const auto c = synthetic_corpus(rng, 300, o);
  const PreprocessLimits lim{3, 10};
  const auto kept = preprocess(c, lim);
  std::size_t expected = 0;
  for (const auto& inst : c.instances) {
    bool ok = inst.context.size() <= 3 && inst.response.tokens.size() <= 10;
    for (const auto& u : inst.context) ok = ok && u.tokens.size() <= 10;
    expected += ok;
  }
  CHECK(kept.size() == expected);
  CHECK(kept.size() < c.size());
  CHECK_THROWS_AS(preprocess(c, {1, 0}), ConfigError);
}

TEST_CASE("uniform_below stays in range and rejects the biased tail") {
  std::mt19937_64 eng(1);
  for (std::uint64_t bound : {1ULL, 2ULL, 3ULL, 7ULL, 1000ULL, (1ULL << 63) + 5}) {
    for (int i = 0; i < 200; ++i) CHECK(uniform_below(bound, eng) < bound);
  }
  // Engine whose first output falls in the rejected zone for bound 3.
  struct Scripted {
    std::vector<std::uint64_t> values;
    std::size_t i = 0;
    std::uint64_t operator()() { return values[i++]; }
  } scripted{{0, 10}};
  CHECK(uniform_below(3, scripted) == 1);  // 0 < (2^64 mod 3) = 1, so 10 % 3
  CHECK(scripted.i == 2);
}

TEST_CASE("split oracle: reference Fisher-Yates") {
  Rng rng(4);
  const auto c = synthetic_corpus(rng, 57);
  SplitSpec spec{12345, 30, 10, 7, std::vector<std::size_t>{4, 6}};
  const auto s = split(c, spec);

  std::vector<std::size_t> order(c.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 eng(12345);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::uint64_t r;
    const std::uint64_t bound = i;
    do {
      r = eng();
    } while (r < (0 - bound) % bound);
    std::swap(order[i - 1], order[r % bound]);
  }
  auto slice = [&](std::size_t from, std::size_t n) {
    std::vector<std::size_t> v(order.begin() + from, order.begin() + from + n);
    std::sort(v.begin(), v.end());
    std::vector<std::string> ids;
    for (auto i : v) ids.push_back(c.instances[i].id);
    return ids;
  };
  CHECK(ids_of(s.train) == slice(0, 30));
  CHECK(ids_of(s.dev) == slice(30, 10));
  CHECK(ids_of(s.test) == slice(40, 7));
  REQUIRE(s.extra_pools.size() == 2);
  CHECK(ids_of(s.extra_pools[0]) == slice(47, 4));
  CHECK(ids_of(s.extra_pools[1]) == slice(51, 6));
}

TEST_CASE("split properties over random sizes and seeds") {
  Rng rng(31);
  for (int round = 0; round < 60; ++round) {
    const auto c = synthetic_corpus(rng, rng.between(0, 120));
    const std::size_t n = c.size();
    SplitSpec spec;
    spec.seed = rng.engine()();
    spec.train_size = rng.between(0, n);
    spec.dev_size = rng.between(0, n - spec.train_size);
    spec.test_size = rng.between(0, n - spec.train_size - spec.dev_size);
    const std::size_t rest = n - spec.train_size - spec.dev_size - spec.test_size;
    const bool explicit_pools = rng.chance(0.5);
    if (explicit_pools) {
      const std::size_t a = rng.between(0, rest);
      spec.extra_pool_sizes = std::vector<std::size_t>{a, rng.between(0, rest - a)};
    }
    const auto s = split(c, spec);

    CHECK(s.train.size() == spec.train_size);
    CHECK(s.dev.size() == spec.dev_size);
    CHECK(s.test.size() == spec.test_size);
    std::set<std::string> seen;
    std::size_t total = 0;
    auto absorb = [&](const Corpus& part) {
      for (const auto& inst : part.instances) {
        CHECK(seen.insert(inst.id).second);  // pairwise disjoint
      }
      total += part.size();
      // slices keep corpus order
      auto ids = ids_of(part);
      CHECK(std::is_sorted(ids.begin(), ids.end()));
    };
    absorb(s.train);
    absorb(s.dev);
    absorb(s.test);
    for (const auto& p : s.extra_pools) absorb(p);
    if (!explicit_pools) {
      CHECK(total == n);
      CHECK(s.extra_pools.size() == (rest > 0 ? 1u : 0u));
    }
    // Same seed, same result.
    const auto again = split(c, spec);
    CHECK(ids_of(again.train) == ids_of(s.train));
    CHECK(ids_of(again.test) == ids_of(s.test));
  }
}

TEST_CASE("split reports the deficit") {
  Rng rng(1);
  const auto c = synthetic_corpus(rng, 10);
  try {
    split(c, {0, 8, 2, 3, std::nullopt});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("deficit 3") != std::string::npos);
  }
  CHECK_THROWS_AS(split(c, {0, 5, 2, 2, std::vector<std::size_t>{2}}), ConfigError);
  Corpus dup = c;
  dup.instances[1].id = dup.instances[0].id;
  CHECK_THROWS_AS(split(dup, {0, 5, 0, 0, std::nullopt}), BuildError);
}

TEST_CASE("corpus JSONL round trip") {
  Rng rng(8);
  TempDir dir;
  auto c = synthetic_corpus(rng, 40);
  c.instances[3] = make_instance("odd", {"Ünïcödé \"quoted\"", "tab\there"}, "new\nline");
  const auto p = dir / "corpus.jsonl";
  write_corpus(p, c);
  const auto back = read_corpus(p);
  CHECK(back.name == "corpus");
  CHECK(back.instances == c.instances);
  write_corpus(dir / "again.jsonl", back);
  CHECK(read_file(p) == read_file(dir / "again.jsonl"));
}

TEST_CASE("corpus reader rejects bad content with a line number") {
  TempDir dir;
  const auto p = dir / "bad.jsonl";
  auto expect_format_error = [&](const std::string& body, const std::string& needle) {
    write_file_atomic(p, body);
    try {
      read_corpus(p);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  const std::string good =
      R"({"id":"a","source":"s","context":[{"speaker":1,"text":"hi"}],"response":{"speaker":2,"text":"yo"}})";
  expect_format_error(good + "\n{oops\n", "bad:2:");
  expect_format_error(good + "\n" + good + "\n", "a");
  expect_format_error(
      R"({"id":"b","source":"s","context":[{"speaker":1,"text":"hi"}],"response":{"speaker":1,"text":"yo"}})" "\n",
      "bad:1:");
  expect_format_error(
      R"({"id":"c","source":"s","context":[],"response":{"speaker":2,"text":"yo"}})" "\n",
      "bad:1:");
  CHECK_THROWS_AS(read_corpus(dir / "missing.jsonl"), InputMissingError);
}

TEST_CASE("utterances need visible text") {
  CHECK_THROWS_AS(Utterance::make(Speaker::kOne, "  "), FormatError);
  CHECK(Utterance::make(Speaker::kTwo, "A b").tokens == TokenSequence{"a", "b"});
  CHECK(other(Speaker::kOne) == Speaker::kTwo);
}

TEST_CASE("ingest report JSON") {
  IngestReport r;
  r.read = 5;
  r.emitted = 2;
  const auto j = to_json(r);
  CHECK(j["read"] == 5);
  CHECK(j["emitted"] == 2);
  CHECK(j["limits"]["max_turns"] == 8);
}
