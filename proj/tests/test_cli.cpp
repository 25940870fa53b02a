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

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "selfret/cli/commands.hpp"
#include "selfret/io.hpp"
#include "test_support.hpp"

using namespace selfret;
using namespace selfret::testing;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

RunResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "selfret");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

nlohmann::json base_config(const TempDir& dir) {
  return {
      {"seed", 42},
      {"workers", 2},
      {"paths",
       {{"corpus", (dir / "corpus.jsonl").string()},
        {"splits_dir", (dir / "splits").string()},
        {"cache_dir", (dir / "cache").string()},
        {"output_dir", (dir / "out").string()}}},
      {"split", {{"train_size", 90}, {"dev_size", 15}, {"test_size", 15}}},
      {"retrieval", {{"k", 4}, {"prefetch_m", 20}}},
      {"backend", {{"dim", 16}}},
  };
}

fs::path write_config(const TempDir& dir, const nlohmann::json& cfg,
                      const std::string& name = "config.json") {
  const auto p = dir / name;
  write_file_atomic(p, cfg.dump(2));
  return p;
}

// Ingest, split and retrieve; returns the config path.
fs::path pipeline(const TempDir& dir, nlohmann::json cfg) {
  write_raw_chains(dir / "raw.jsonl", 45, 3, 1);
  REQUIRE(run({"ingest", "--input", (dir / "raw.jsonl").string(), "--output",
               (dir / "corpus.jsonl").string()}).code == 0);
  fs::create_directories(dir / "splits");
  fs::create_directories(dir / "out");
  const auto c = write_config(dir, cfg);
  REQUIRE(run({"split", "--config", c.string()}).code == 0);
  const auto r = run({"retrieve", "--config", c.string()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  return c;
}

std::string hyps_from_triples(const fs::path& triples) {
  std::string out;
  for_each_line(triples, [&](std::string_view line, std::size_t) {
    const auto j = nlohmann::json::parse(line);
    const auto& ev = j["evidences"];
    out += nlohmann::json{{"id", j["id"]},
                          {"hyp", ev.empty() ? std::string("none") : ev[0]["text"].get<std::string>()}}
               .dump() + "\n";
  });
  return out;
}

}  // namespace

TEST_CASE("full pipeline through the CLI") {
  TempDir dir;
  const auto c = pipeline(dir, base_config(dir));
  for (const char* split : {"train", "dev", "test"}) {
    CHECK(fs::exists(dir / "out" / (std::string("triples_") + split + ".jsonl")));
    CHECK(fs::exists(dir / "out" / (std::string("evidence_") + split + ".jsonl")));
  }
  CHECK(fs::exists(dir / "splits" / "extra_0.jsonl"));
  const auto meta = nlohmann::json::parse(read_file(dir / "out" / "run_meta.json"));
  CHECK(meta["strategy"] == "mix");
  CHECK(meta["k"] == 4);
  CHECK(meta["members"] == 90);
  CHECK(meta["outputs"]["test"]["records"] == 15);

  // Leave-one-out on the train split.
  for_each_line(dir / "out" / "triples_train.jsonl", [](std::string_view line, std::size_t) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["evidences"].size() <= 4);
    for (const auto& e : j["evidences"]) {
      CHECK(e["source_id"] != j["id"]);
      CHECK(e["f"].get<double>() >= 0.4);
    }
  });

  REQUIRE(run({"export", "--config", c.string()}).code == 0);
  REQUIRE(run({"export", "--config", c.string(), "--format", "gpt"}).code == 0);
  const auto triples = read_triples(dir / "out" / "triples_test.jsonl");
  const auto fid = read_formatted(dir / "out" / "formatted_fid_test.jsonl");
  const auto gpt = read_formatted(dir / "out" / "formatted_gpt_test.jsonl");
  REQUIRE(fid.size() == triples.size());
  for (std::size_t i = 0; i < triples.size(); ++i) {
    CHECK(std::get<std::vector<std::string>>(fid[i].input).size() ==
          triples[i].evidences.size() + 1);
    CHECK(count_occurrences(std::get<std::string>(gpt[i].input), "[p]") ==
          triples[i].evidences.size());
    CHECK(fid[i].target == triples[i].instance.response.text);
  }

  write_file_atomic(dir / "hyps.jsonl", hyps_from_triples(dir / "out" / "triples_test.jsonl"));
  const auto ev = run({"evaluate", "--hyps", (dir / "hyps.jsonl").string(), "--triples",
                       (dir / "out" / "triples_test.jsonl").string(), "--output",
                       (dir / "report.json").string(), "--overlap", "max"});
  INFO(ev.err);
  REQUIRE(ev.code == 0);
  const auto report = nlohmann::json::parse(read_file(dir / "report.json"));
  CHECK(report["n"] == 15);
  CHECK(report["meta"]["smoothing"] == "add-epsilon");
  CHECK(report["dist1"].get<double>() <= 100.0);
  const auto overlap = nlohmann::json::parse(read_file(dir / "report.overlap_max.json"));
  CHECK(overlap.size() == 11);

  const auto an = run({"analyze-overlap", "--hyps", (dir / "hyps.jsonl").string(),
                       "--triples", (dir / "out" / "triples_test.jsonl").string(),
                       "--output", (dir / "sum.json").string(), "--mode", "sum"});
  REQUIRE(an.code == 0);
  std::size_t total = 0;
  for (const auto& b : nlohmann::json::parse(read_file(dir / "sum.json"))) {
    total += b["n"].get<std::size_t>();
  }
  CHECK(total == 15);
}

TEST_CASE("retrieve and split are byte-reproducible") {
  TempDir dir;
  const auto c = pipeline(dir, base_config(dir));
  std::map<std::string, std::string> before;
  for (const auto& e : fs::directory_iterator(dir / "out")) {
    before[e.path().filename().string()] = read_file(e.path());
  }
  const auto split_before = read_file(dir / "splits" / "train.jsonl");
  const auto manifest_before = read_file(dir / "splits" / "split_manifest.json");

  REQUIRE(run({"split", "--config", c.string()}).code == 0);
  REQUIRE(run({"retrieve", "--config", c.string(), "--workers", "1"}).code == 0);
  CHECK(read_file(dir / "splits" / "train.jsonl") == split_before);
  CHECK(read_file(dir / "splits" / "split_manifest.json") == manifest_before);
  for (const auto& [name, bytes] : before) {
    if (name == "run_timing.json") continue;
    CAPTURE(name);
    // The worker count is part of the config digest in run_meta.json.
    if (name == "run_meta.json") continue;
    CHECK(read_file(dir / "out" / name) == bytes);
  }
  REQUIRE(run({"retrieve", "--config", c.string()}).code == 0);
  CHECK(read_file(dir / "out" / "run_meta.json") == before["run_meta.json"]);

  // A different seed moves the split.
  REQUIRE(run({"split", "--config", c.string(), "--seed", "43"}).code == 0);
  CHECK(read_file(dir / "splits" / "train.jsonl") != split_before);
}

TEST_CASE("strategy, scorer and filter overrides") {
  TempDir dir;
  const auto c = pipeline(dir, base_config(dir));
  const auto triples = dir / "out" / "triples_dev.jsonl";
  auto evidences_of = [&] {
    std::vector<std::size_t> n;
    for (const auto& t : read_triples(triples)) n.push_back(t.evidences.size());
    return n;
  };
  REQUIRE(run({"retrieve", "--config", c.string(), "--tau", "none"}).code == 0);
  for (auto n : evidences_of()) CHECK(n == 4);
  REQUIRE(run({"retrieve", "--config", c.string(), "--scorer", "bm25", "--strategy",
               "c2r", "--exact"}).code == 0);
  for (const auto& t : read_triples(triples)) {
    CHECK(t.evidences.size() == 4);  // bm25 runs unfiltered by default
    for (const auto& e : t.evidences) CHECK(e.strategy == EvidenceOrigin::kC2R);
  }
  const auto meta = nlohmann::json::parse(read_file(dir / "out" / "run_meta.json"));
  CHECK(meta["scorer"] == "bm25");
  CHECK(meta["tau"].is_null());
  CHECK(meta["exact"] == true);
  REQUIRE(run({"retrieve", "--config", c.string(), "--strategy", "random", "--tau",
               "none"}).code == 0);
  CHECK(run({"retrieve", "--config", c.string(), "--tau", "abc"}).code == 1);
  CHECK(run({"retrieve", "--config", c.string(), "--k", "0"}).code == 1);
}

TEST_CASE("cross-domain retrieval against another corpus") {
  TempDir dir;
  auto cfg = base_config(dir);
  pipeline(dir, cfg);
  Rng rng(77);
  SynthOptions o;
  o.id_prefix = "other";
  write_corpus(dir / "other.jsonl", synthetic_corpus(rng, 30, o));
  cfg["retrieval"]["retrieval_corpora"] = {(dir / "other.jsonl").string()};
  cfg["retrieval"]["splits"] = {"test"};
  const auto c = write_config(dir, cfg, "cross.json");
  const auto r = run({"retrieve", "--config", c.string(), "--tau", "none"});
  INFO(r.err);
  REQUIRE(r.code == 0);
  for (const auto& t : read_triples(dir / "out" / "triples_test.jsonl")) {
    for (const auto& e : t.evidences) CHECK(e.source_id.rfind("other", 0) == 0);
  }
}

TEST_CASE("exit codes and error JSON") {
  TempDir dir;
  const auto missing = run({"ingest", "--input", (dir / "nope.jsonl").string(),
                            "--output", (dir / "c.jsonl").string()});
  CHECK(missing.code == cli::kExitInputMissing);
  const auto err = nlohmann::json::parse(missing.err);
  CHECK(err["error"] == "input not found");
  CHECK(err["message"].get<std::string>().find("nope.jsonl") != std::string::npos);

  write_file_atomic(dir / "empty.jsonl", "");
  const auto empty = run({"ingest", "--input", (dir / "empty.jsonl").string(),
                          "--output", (dir / "c.jsonl").string()});
  CHECK(empty.code == 0);
  CHECK(empty.err.find("warning") != std::string::npos);
  CHECK(read_file(dir / "c.jsonl").empty());

  write_file_atomic(dir / "corrupt.jsonl", "{\"thread_id\":\"1\",\"text\":\"x\"}\nnot json\n");
  const auto corrupt = run({"ingest", "--input", (dir / "corrupt.jsonl").string(),
                            "--output", (dir / "c2.jsonl").string()});
  CHECK(corrupt.code == cli::kExitFailure);
  CHECK(nlohmann::json::parse(corrupt.err)["error"] == "ingest error");
  CHECK_FALSE(fs::exists(dir / "c2.jsonl"));

  auto cfg = base_config(dir);
  cfg["retrieval"]["bogus"] = 1;
  const auto bad = run({"split", "--config", write_config(dir, cfg).string()});
  CHECK(bad.code == cli::kExitFailure);
  CHECK(bad.err.find("bogus") != std::string::npos);

  auto no_seed = base_config(dir);
  no_seed.erase("seed");
  CHECK(run({"split", "--config", write_config(dir, no_seed).string()}).code == 1);
  CHECK(run({"split", "--config", (dir / "none.json").string()}).code == 2);
  CHECK(run({"frobnicate"}).code != 0);
  CHECK(run({}).code != 0);
}

TEST_CASE("split deficit is reported") {
  TempDir dir;
  write_raw_chains(dir / "raw.jsonl", 5, 3, 3);
  REQUIRE(run({"ingest", "--input", (dir / "raw.jsonl").string(), "--output",
               (dir / "corpus.jsonl").string()}).code == 0);
  fs::create_directories(dir / "splits");
  const auto r = run({"split", "--config", write_config(dir, base_config(dir)).string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("deficit") != std::string::npos);
}

TEST_CASE("failed retrieval leaves no partial outputs") {
  TempDir dir;
  const auto c = pipeline(dir, base_config(dir));
  for (const auto& e : fs::directory_iterator(dir / "out")) fs::remove(e.path());
  // Train and dev succeed, then the test split is corrupt.
  write_file_atomic(dir / "splits" / "test.jsonl", "{broken\n");
  const auto r = run({"retrieve", "--config", c.string()});
  CHECK(r.code == 1);
  CHECK(fs::is_empty(dir / "out"));
}

TEST_CASE("unreachable embedding service fails cleanly") {
  TempDir dir;
  auto cfg = base_config(dir);
  pipeline(dir, cfg);
  for (const auto& e : fs::directory_iterator(dir / "out")) fs::remove(e.path());
  cfg["backend"] = {{"type", "http"}, {"port", 1}, {"dim", 8}, {"retries", 0},
                    {"timeout_seconds", 1}};
  cfg["paths"]["cache_dir"] = (dir / "cache2").string();
  const auto r = run({"retrieve", "--config", write_config(dir, cfg).string()});
  CHECK(r.code == 1);
  CHECK(nlohmann::json::parse(r.err)["error"] == "transport error");
  CHECK(fs::is_empty(dir / "out"));
}

TEST_CASE("evaluate names a missing hypothesis") {
  TempDir dir;
  pipeline(dir, base_config(dir));
  const auto triples = dir / "out" / "triples_test.jsonl";
  const auto all = read_triples(triples);
  std::string hyps;
  for (std::size_t i = 1; i < all.size(); ++i) {
    hyps += nlohmann::json{{"id", all[i].instance.id}, {"hyp", "x"}}.dump() + "\n";
  }
  write_file_atomic(dir / "hyps.jsonl", hyps);
  const auto r = run({"evaluate", "--hyps", (dir / "hyps.jsonl").string(), "--triples",
                      triples.string(), "--output", (dir / "rep.json").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find(all[0].instance.id) != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "rep.json"));

  write_file_atomic(dir / "bad.jsonl", "{\"id\":\"x\"}\n");
  CHECK(run({"evaluate", "--hyps", (dir / "bad.jsonl").string(), "--triples",
             triples.string(), "--output", (dir / "rep.json").string()}).code == 1);
}

TEST_CASE("single-file export") {
  TempDir dir;
  pipeline(dir, base_config(dir));
  const auto r = run({"export", "--triples", (dir / "out" / "triples_dev.jsonl").string(),
                      "--output", (dir / "dev_gpt.jsonl").string(), "--mode", "gpt"});
  REQUIRE(r.code == 0);
  const auto ex = read_formatted(dir / "dev_gpt.jsonl");
  CHECK(ex.size() == 15);
  CHECK(ex[0].mode == FormatMode::kGptConcat);
  CHECK(run({"export", "--triples", (dir / "nope.jsonl").string(), "--output",
             (dir / "x.jsonl").string()}).code == 2);
}

TEST_CASE("build-index persists and reuses the embedding cache") {
  TempDir dir;
  const auto c = pipeline(dir, base_config(dir));
  auto r = run({"build-index", "--config", c.string()});
  REQUIRE(r.code == 0);
  CHECK(r.err.find("(cached)") != std::string::npos);  // retrieve already built it
  CHECK(fs::exists(dir / "cache" / "manifest.json"));
}

TEST_CASE("installed binary returns the documented exit codes") {
  TempDir dir;
  const std::string bin = SELFRET_CLI_PATH;
  const std::string quiet = " >/dev/null 2>&1";
  int status = std::system((bin + " ingest --input " + (dir / "missing").string() +
                            " --output " + (dir / "x").string() + quiet).c_str());
  CHECK(WEXITSTATUS(status) == 2);
  status = std::system((bin + " --help" + quiet).c_str());
  CHECK(WEXITSTATUS(status) == 0);
}
