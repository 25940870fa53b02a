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

#include "selfret/cli/config.hpp"

#include <set>

#include "selfret/digest.hpp"
#include "selfret/error.hpp"
#include "selfret/io.hpp"

namespace selfret::cli {

namespace {

using json = nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& known,
                    const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (!known.count(key)) {
      throw ConfigError("config: unknown key '" + where + key + "'");
    }
  }
}

const json& object_at(const json& j, const char* key) {
  static const json kEmpty = json::object();
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return kEmpty;
  if (!it->is_object()) {
    throw ConfigError(std::string("config: '") + key + "' must be an object");
  }
  return *it;
}

template <typename T>
void read_into(const json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return;
  out = it->get<T>();
}

std::filesystem::path path_or_empty(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  return it->get<std::string>();
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  reject_unknown(j, {"seed", "workers", "paths", "limits", "split", "retrieval",
                     "backend", "format", "metrics"},
                 "");
  RunConfig cfg;
  try {
    auto seed = j.find("seed");
    if (seed == j.end() || !seed->is_number_integer()) {
      throw ConfigError("config: 'seed' is mandatory and must be an integer");
    }
    cfg.seed = seed->get<std::uint64_t>();
    read_into(j, "workers", cfg.workers);
    if (cfg.workers == 0) throw ConfigError("config: workers must be >= 1");

    const auto& paths = object_at(j, "paths");
    reject_unknown(paths, {"corpus", "splits_dir", "cache_dir", "output_dir"},
                   "paths.");
    cfg.paths.corpus = path_or_empty(paths, "corpus");
    cfg.paths.splits_dir = path_or_empty(paths, "splits_dir");
    cfg.paths.cache_dir = path_or_empty(paths, "cache_dir");
    cfg.paths.output_dir = path_or_empty(paths, "output_dir");

    const auto& limits = object_at(j, "limits");
    reject_unknown(limits, {"max_turns", "max_tokens_per_utterance"}, "limits.");
    read_into(limits, "max_turns", cfg.limits.max_turns);
    read_into(limits, "max_tokens_per_utterance",
              cfg.limits.max_tokens_per_utterance);

    const auto& split = object_at(j, "split");
    reject_unknown(split, {"train_size", "dev_size", "test_size",
                           "extra_pool_sizes"},
                   "split.");
    cfg.split.seed = cfg.seed;
    read_into(split, "train_size", cfg.split.train_size);
    read_into(split, "dev_size", cfg.split.dev_size);
    read_into(split, "test_size", cfg.split.test_size);
    if (auto it = split.find("extra_pool_sizes"); it != split.end() && !it->is_null()) {
      cfg.split.extra_pool_sizes = it->get<std::vector<std::size_t>>();
    }

    const auto& r = object_at(j, "retrieval");
    reject_unknown(r, {"k", "strategy", "tau", "prefetch_m", "exact", "scorer",
                       "idf", "context_side", "bm25_k1", "bm25_b", "splits",
                       "extra_pools", "retrieval_corpora"},
                   "retrieval.");
    auto& rc = cfg.retrieval;
    if (auto it = r.find("scorer"); it != r.end()) {
      rc.retrieval = RetrievalConfig::for_scorer(parse_scorer(it->get<std::string>()));
    }
    read_into(r, "k", rc.retrieval.k);
    if (auto it = r.find("strategy"); it != r.end()) {
      rc.retrieval.strategy = parse_strategy(it->get<std::string>());
    }
    if (auto it = r.find("tau"); it != r.end()) {
      if (it->is_null()) {
        rc.retrieval.tau.reset();
      } else {
        rc.retrieval.tau = it->get<double>();
      }
    }
    read_into(r, "prefetch_m", rc.retrieval.prefetch_m);
    read_into(r, "exact", rc.retrieval.exact_mode);
    read_into(r, "idf", rc.retrieval.use_idf);
    rc.retrieval.seed = cfg.seed;
    if (auto it = r.find("context_side"); it != r.end()) {
      rc.context_side = parse_context_side(it->get<std::string>());
    }
    read_into(r, "bm25_k1", rc.bm25.k1);
    read_into(r, "bm25_b", rc.bm25.b);
    if (auto it = r.find("splits"); it != r.end()) {
      rc.splits.clear();
      for (const auto& s : *it) {
        rc.splits.push_back(parse_split_tag(s.get<std::string>()));
      }
    }
    read_into(r, "extra_pools", rc.extra_pools);
    if (auto it = r.find("retrieval_corpora"); it != r.end() && !it->is_null()) {
      for (const auto& p : *it) rc.retrieval_corpora.emplace_back(p.get<std::string>());
    }
    rc.retrieval.validate();

    const auto& b = object_at(j, "backend");
    reject_unknown(b, {"type", "table", "dim", "host", "port", "max_in_flight",
                       "retries", "timeout_seconds", "model"},
                   "backend.");
    read_into(b, "type", cfg.backend.type);
    if (cfg.backend.type != "static" && cfg.backend.type != "http") {
      throw ConfigError("config: backend.type must be static or http");
    }
    if (auto it = b.find("table"); it != b.end() && !it->is_null()) {
      cfg.backend.table = it->get<std::string>();
    }
    read_into(b, "dim", cfg.backend.dim);
    read_into(b, "host", cfg.backend.http.host);
    read_into(b, "port", cfg.backend.http.port);
    read_into(b, "max_in_flight", cfg.backend.http.max_in_flight);
    read_into(b, "retries", cfg.backend.http.retries);
    read_into(b, "timeout_seconds", cfg.backend.http.timeout_seconds);
    read_into(b, "model", cfg.backend.http.model);
    cfg.backend.http.dim = cfg.backend.dim;

    if (auto it = j.find("format"); it != j.end()) {
      cfg.format = parse_format_mode(it->get<std::string>());
    }

    const auto& m = object_at(j, "metrics");
    reject_unknown(m, {"bleu_max_n", "bleu_epsilon", "overlap_counting"}, "metrics.");
    read_into(m, "bleu_max_n", cfg.metrics.bleu.max_n);
    read_into(m, "bleu_epsilon", cfg.metrics.bleu.epsilon);
    if (auto it = m.find("overlap_counting"); it != m.end()) {
      const auto s = it->get<std::string>();
      if (s == "set") {
        cfg.metrics.counting = OverlapCounting::kSet;
      } else if (s == "multiset") {
        cfg.metrics.counting = OverlapCounting::kMultiset;
      } else {
        throw ConfigError("config: metrics.overlap_counting must be set or multiset");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
  return from_json(j);
}

nlohmann::ordered_json RunConfig::to_json() const {
  using ojson = nlohmann::ordered_json;
  ojson splits = ojson::array();
  for (auto s : retrieval.splits) splits.push_back(std::string(to_string(s)));
  ojson corpora = ojson::array();
  for (const auto& p : retrieval.retrieval_corpora) corpora.push_back(p.string());
  const auto& rc = retrieval.retrieval;
  return {
      {"seed", seed},
      {"workers", workers},
      {"paths",
       {{"corpus", paths.corpus.string()},
        {"splits_dir", paths.splits_dir.string()},
        {"cache_dir", paths.cache_dir.string()},
        {"output_dir", paths.output_dir.string()}}},
      {"limits",
       {{"max_turns", limits.max_turns},
        {"max_tokens_per_utterance", limits.max_tokens_per_utterance}}},
      {"split",
       {{"train_size", split.train_size},
        {"dev_size", split.dev_size},
        {"test_size", split.test_size},
        {"extra_pool_sizes", split.extra_pool_sizes
                                 ? ojson(*split.extra_pool_sizes)
                                 : ojson(nullptr)}}},
      {"retrieval",
       {{"k", rc.k},
        {"strategy", to_string(rc.strategy)},
        {"tau", rc.tau ? ojson(*rc.tau) : ojson(nullptr)},
        {"prefetch_m", rc.prefetch_m},
        {"exact", rc.exact_mode},
        {"scorer", to_string(rc.scorer)},
        {"idf", rc.use_idf},
        {"context_side", to_string(retrieval.context_side)},
        {"bm25_k1", retrieval.bm25.k1},
        {"bm25_b", retrieval.bm25.b},
        {"splits", std::move(splits)},
        {"extra_pools", retrieval.extra_pools},
        {"retrieval_corpora", std::move(corpora)}}},
      {"backend",
       {{"type", backend.type},
        {"table", backend.table ? ojson(backend.table->string()) : ojson(nullptr)},
        {"dim", backend.dim},
        {"host", backend.http.host},
        {"port", backend.http.port},
        {"max_in_flight", backend.http.max_in_flight},
        {"retries", backend.http.retries},
        {"timeout_seconds", backend.http.timeout_seconds},
        {"model", backend.http.model}}},
      {"format", to_string(format)},
      {"metrics",
       {{"bleu_max_n", metrics.bleu.max_n},
        {"bleu_epsilon", metrics.bleu.epsilon},
        {"overlap_counting",
         metrics.counting == OverlapCounting::kSet ? "set" : "multiset"}}},
  };
}

std::string RunConfig::digest() const { return sha256_hex(to_json().dump()); }

std::unique_ptr<EmbeddingBackend> make_backend(const BackendConfig& cfg) {
  if (cfg.type == "http") {
    HttpBackendOptions opts = cfg.http;
    opts.dim = cfg.dim;
    return std::make_unique<HttpEmbeddingBackend>(opts);
  }
  if (cfg.table) {
    return std::make_unique<StaticEmbeddingBackend>(
        StaticEmbeddingBackend::load(*cfg.table, cfg.dim));
  }
  return std::make_unique<StaticEmbeddingBackend>(cfg.dim);
}

}  // namespace selfret::cli
