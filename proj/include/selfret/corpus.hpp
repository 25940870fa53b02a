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
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "selfret/text.hpp"

namespace selfret {

enum class Speaker : int { kOne = 1, kTwo = 2 };

inline Speaker other(Speaker s) {
  return s == Speaker::kOne ? Speaker::kTwo : Speaker::kOne;
}

struct Utterance {
  Speaker speaker = Speaker::kOne;
  std::string text;
  TokenSequence tokens;  // always tokenize(text)

  /// Throws FormatError when the text is blank.
  static Utterance make(Speaker speaker, std::string text);

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

/// One (context, response) pair. Context speakers alternate and the
/// response speaker differs from the last context speaker.
struct DialogueInstance {
  std::string id;
  std::vector<Utterance> context;
  Utterance response;
  std::string source_tag;

  const Utterance& latest() const { return context.back(); }

  friend bool operator==(const DialogueInstance&,
                         const DialogueInstance&) = default;
};

/// Throws FormatError naming the instance when an invariant is violated.
void validate_instance(const DialogueInstance& instance);

struct Corpus {
  std::string name;
  std::vector<DialogueInstance> instances;

  std::size_t size() const { return instances.size(); }
  bool empty() const { return instances.empty(); }
  /// Throws BuildError on the first repeated id.
  void check_unique_ids() const;
};

struct PreprocessLimits {
  std::size_t max_turns = 8;
  std::size_t max_tokens_per_utterance = 128;
};

// Raw reply-tree node. A missing parent marks a root.
struct RawRecord {
  std::string thread_id;
  std::optional<std::string> parent_id;
  std::optional<std::string> text;
  std::string author;
};

struct IngestReport {
  std::size_t read = 0;
  std::size_t emitted = 0;
  std::size_t skipped_malformed = 0;
  std::size_t discarded_by_limits = 0;
  PreprocessLimits limits;
};

nlohmann::ordered_json to_json(const IngestReport& report);

struct IngestResult {
  Corpus corpus;
  IngestReport report;
};

/// Flattens reply trees: every node at depth >= 1 yields one instance whose
/// context is the root-to-parent path and whose response is the node.
/// Speakers follow depth parity (even depth = speaker 1). Records with no
/// text, a duplicate id, or a parent that was never accepted are skipped
/// and counted; paths violating `limits` are discarded and counted.
class ChainIngestor {
 public:
  ChainIngestor(std::string source_tag, PreprocessLimits limits);

  void add(const RawRecord& record);
  IngestResult finish() &&;

 private:
  struct Node {
    std::optional<std::size_t> parent;
    std::size_t depth;
    Utterance utterance;
  };

  std::string source_tag_;
  PreprocessLimits limits_;
  std::vector<Node> nodes_;
  std::unordered_map<std::string, std::size_t> by_id_;
  IngestResult result_;
};

IngestResult ingest_reddit_chains(std::span<const RawRecord> records,
                                  const std::string& source_tag,
                                  const PreprocessLimits& limits);

/// Reads JSONL records {"thread_id", "parent_id", "text", "author"}.
/// A line that is not a JSON object is a corrupt stream: IngestError.
IngestResult ingest_reddit_chains(std::istream& raw,
                                  const std::string& source_tag,
                                  const PreprocessLimits& limits);

/// Linear multi-turn sessions, one JSONL line {"id", "turns": [str]} per
/// dialogue (movie-script style). Each session is ingested as a chain; a
/// blank turn cuts the session at that point.
IngestResult ingest_sessions(std::istream& raw, const std::string& source_tag,
                             const PreprocessLimits& limits);

/// Keeps instances whose context has <= max_turns utterances and whose
/// utterances all have <= max_tokens_per_utterance tokens. Throws
/// ConfigError for zero limits.
Corpus preprocess(const Corpus& corpus, const PreprocessLimits& limits);

struct SplitSpec {
  std::uint64_t seed = 0;
  std::size_t train_size = 100000;
  std::size_t dev_size = 10000;
  std::size_t test_size = 10000;
  /// Unset: every remaining instance forms a single extra pool.
  std::optional<std::vector<std::size_t>> extra_pool_sizes;
};

struct SplitResult {
  Corpus train;
  Corpus dev;
  Corpus test;
  std::vector<Corpus> extra_pools;
};

/// Seeded Fisher-Yates over corpus positions (mt19937_64, rejection-sampled
/// bounded draws) then consecutive slices: train, dev, test, extra pools.
/// Each slice keeps the input corpus order. Throws ConfigError naming the
/// deficit when the sizes exceed the corpus.
SplitResult split(const Corpus& corpus, const SplitSpec& spec);

/// Uniform draw in [0, bound) from a 64-bit engine, by rejection.
std::uint64_t uniform_below(std::uint64_t bound, auto& engine) {
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = engine();
    if (r >= threshold) return r % bound;
  }
}

nlohmann::ordered_json to_json(const Utterance& u);
nlohmann::ordered_json to_json(const DialogueInstance& instance);
DialogueInstance instance_from_json(const nlohmann::json& j);

void write_corpus(std::ostream& out, const Corpus& corpus);
void write_corpus(const std::filesystem::path& path, const Corpus& corpus);
/// Throws IoError if unreadable, FormatError (with line number) on bad
/// content or a repeated id. The corpus is named after the file stem.
Corpus read_corpus(const std::filesystem::path& path);
Corpus read_corpus(std::istream& in, std::string name);

}  // namespace selfret
