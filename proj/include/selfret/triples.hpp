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

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "selfret/corpus.hpp"
#include "selfret/retrieval.hpp"

namespace selfret {

enum class SplitTag { kTrain, kDev, kTest };
enum class FormatMode { kGptConcat, kFid };

std::string_view to_string(SplitTag t);
std::string_view to_string(FormatMode m);
SplitTag parse_split_tag(std::string_view s);
FormatMode parse_format_mode(std::string_view s);

inline constexpr std::string_view kPassageMarker = "[p]";
inline constexpr std::string_view kSpeaker1Marker = "[speaker1]";
inline constexpr std::string_view kSpeaker2Marker = "[speaker2]";

/// A dialogue instance with its (filtered) evidence, in rank order.
struct TripleRecord {
  DialogueInstance instance;
  std::vector<Evidence> evidences;
  SplitTag split_tag = SplitTag::kTrain;

  friend bool operator==(const TripleRecord&, const TripleRecord&) = default;
};

struct FormattedExample {
  std::string id;
  FormatMode mode = FormatMode::kGptConcat;
  /// GPT: one string. FiD: one string per passage.
  std::variant<std::string, std::vector<std::string>> input;
  std::string target;
};

/// One record per instance of `split`, in order, with
/// evidences = apply_filter(retrieve(instance), cfg.tau). Retrieval runs on
/// `workers` threads; errors carry the offending instance id.
std::vector<TripleRecord> build_triples(const Corpus& split,
                                        const RetrievalSet& set,
                                        const RetrievalConfig& cfg,
                                        SplitTag tag, std::size_t workers = 1);

/// "[speaker1] u1 [speaker2] u2 ..." starting at [speaker1] for the oldest
/// utterance.
std::string render_context(const std::vector<Utterance>& context);

/// "[p] e1 [p] e2 ... <context>". Marker strings occurring inside dialogue
/// text are spaced out ("[ p ]") so the marker count equals the evidence
/// count.
FormattedExample format_gpt(const TripleRecord& rec);
/// One "[p] e_j <context>" passage per evidence plus a final context-only
/// passage.
FormattedExample format_fid(const TripleRecord& rec);
FormattedExample format(const TripleRecord& rec, FormatMode mode);

/// Non-overlapping occurrences of `needle` in `haystack`.
std::size_t count_occurrences(std::string_view haystack, std::string_view needle);

nlohmann::ordered_json to_json(const TripleRecord& rec);
TripleRecord triple_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const FormattedExample& ex);
FormattedExample formatted_from_json(const nlohmann::json& j);

/// Evidence dump line: {"query_id", "strategy", "evidences": [...]}.
nlohmann::ordered_json evidence_dump_json(const TripleRecord& rec,
                                          Strategy strategy);

void write_triples(std::ostream& out, const std::vector<TripleRecord>& recs);
void write_triples(const std::filesystem::path& path,
                   const std::vector<TripleRecord>& recs);
std::vector<TripleRecord> read_triples(const std::filesystem::path& path);
std::vector<TripleRecord> read_triples(std::istream& in);

void write_formatted(const std::filesystem::path& path,
                     const std::vector<FormattedExample>& examples);
std::vector<FormattedExample> read_formatted(const std::filesystem::path& path);

}  // namespace selfret
