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
#include <string>
#include <vector>

#include "json.hpp"
#include "selfret/corpus.hpp"
#include "selfret/embedding.hpp"
#include "selfret/metrics.hpp"
#include "selfret/retrieval.hpp"
#include "selfret/triples.hpp"

namespace selfret::cli {

struct PathsConfig {
  std::filesystem::path corpus;
  std::filesystem::path splits_dir;
  std::filesystem::path cache_dir;
  std::filesystem::path output_dir;
};

struct BackendConfig {
  std::string type = "static";  // static | http
  std::optional<std::filesystem::path> table;  // static; none = hash vectors only
  std::size_t dim = 32;
  HttpBackendOptions http;
};

struct RetrievalRunConfig {
  RetrievalConfig retrieval;
  ContextSide context_side = ContextSide::kLatestUtterance;
  Bm25Params bm25;
  std::vector<SplitTag> splits = {SplitTag::kTrain, SplitTag::kDev,
                                  SplitTag::kTest};
  /// Number of extra pools from the splits directory joined to the train
  /// set for retrieval.
  std::size_t extra_pools = 0;
  /// Explicit retrieval-set files, replacing train + extra pools (used for
  /// cross-domain runs against another corpus's training set).
  std::vector<std::filesystem::path> retrieval_corpora;
};

struct MetricsConfig {
  BleuOptions bleu;
  OverlapCounting counting = OverlapCounting::kSet;
};

/// Whole-pipeline configuration, stored as one JSON file. `seed` is
/// mandatory; every other key has a documented default.
struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  PathsConfig paths;
  PreprocessLimits limits;
  SplitSpec split;
  RetrievalRunConfig retrieval;
  BackendConfig backend;
  FormatMode format = FormatMode::kFid;
  MetricsConfig metrics;

  /// Throws ConfigError on missing/invalid keys.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::ordered_json to_json() const;
  /// SHA-256 of the canonical JSON form.
  std::string digest() const;
};

std::unique_ptr<EmbeddingBackend> make_backend(const BackendConfig& cfg);

}  // namespace selfret::cli
