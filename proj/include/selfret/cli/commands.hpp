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
#include <optional>
#include <string>
#include <vector>

#include "selfret/cli/config.hpp"
#include "selfret/corpus.hpp"
#include "selfret/metrics.hpp"

namespace selfret::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInputMissing = 2;

struct IngestOptions {
  std::filesystem::path input;
  std::filesystem::path output;
  std::optional<std::filesystem::path> report;  // default: <output>.report.json
  std::string source = "reddit";
  std::string raw_format = "chains";  // chains | sessions
  PreprocessLimits limits;
};

/// Each command returns its ingest/run summary and throws selfret::Error on
/// failure; run_cli turns errors into exit codes and stderr JSON.
IngestReport cmd_ingest(const IngestOptions& opts, std::ostream& log);
SplitResult cmd_split(const RunConfig& cfg, std::ostream& log);
void cmd_build_index(const RunConfig& cfg, std::ostream& log);
void cmd_retrieve(const RunConfig& cfg, std::ostream& log);
/// Formats triples_<split>.jsonl into formatted_<mode>_<split>.jsonl.
void cmd_export(const RunConfig& cfg, std::ostream& log);
void export_file(const std::filesystem::path& triples, FormatMode mode,
                 const std::filesystem::path& output);

struct EvaluateOptions {
  std::filesystem::path hyps;
  std::filesystem::path triples;
  std::filesystem::path output;
  std::optional<OverlapMode> overlap;
  std::optional<std::filesystem::path> overlap_output;
  MetricsConfig metrics;
};

MetricReport cmd_evaluate(const EvaluateOptions& opts, std::ostream& log);
OverlapReport cmd_analyze_overlap(const EvaluateOptions& opts, std::ostream& log);

/// Reads {"id", "hyp"} lines.
std::vector<Hypothesis> read_hypotheses(const std::filesystem::path& path);
/// Orders hypotheses like the triples; throws MetricError naming the first
/// triple id without a hypothesis (or the first unmatched hypothesis).
std::vector<Hypothesis> align_hypotheses(const std::vector<TripleRecord>& triples,
                                         const std::vector<Hypothesis>& hyps);

std::filesystem::path split_path(const RunConfig& cfg, const std::string& name);
std::filesystem::path triples_path(const RunConfig& cfg, SplitTag tag);
std::filesystem::path evidence_path(const RunConfig& cfg, SplitTag tag);
std::filesystem::path formatted_path(const RunConfig& cfg, FormatMode mode,
                                     SplitTag tag);

/// Full command-line entry point (subcommands ingest, split, build-index,
/// retrieve, export, evaluate, analyze-overlap).
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

}  // namespace selfret::cli
