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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "selfret/text.hpp"
#include "selfret/triples.hpp"

namespace selfret {

struct BleuOptions {
  std::size_t max_n = 4;
  /// Replaces a zero n-gram match count (epsilon / total), as in the usual
  /// "method 1" smoothing.
  double epsilon = 1e-9;
};

/// Corpus-level scores; every field lies in [0, 1].
struct MetricReport {
  double f1 = 0.0;
  double bleu = 0.0;
  double dist1 = 0.0;
  double dist2 = 0.0;
  std::size_t n_examples = 0;
};

/// Bag-of-unigrams F1 with multiset intersection. Empty hyp scores 0;
/// empty ref throws MetricError.
double unigram_f1(const TokenSequence& hyp, const TokenSequence& ref);

/// Corpus BLEU: geometric mean of clipped n-gram precisions (n = 1..max_n,
/// counts pooled over the corpus) times the brevity penalty
/// exp(1 - r/c) when c <= r. Returns 0 when no unigram matches at all.
/// Throws MetricError on a length mismatch or an empty corpus.
double bleu(std::span<const TokenSequence> hyps,
            std::span<const TokenSequence> refs, const BleuOptions& opts = {});

/// Distinct n-grams over total n-grams, pooled across all hypotheses.
/// Throws MetricError when there is no n-gram at all.
double distinct_n(std::span<const TokenSequence> hyps, std::size_t n);

/// f1 is the mean per-example unigram F1. A distinct-n with no n-grams in
/// the corpus is reported as 0. Throws MetricError for an empty corpus.
MetricReport evaluate(std::span<const TokenSequence> hyps,
                      std::span<const TokenSequence> refs,
                      const BleuOptions& opts = {});

/// Report file body; distinct-n is written as a percentage.
nlohmann::ordered_json to_json(const MetricReport& report,
                               const BleuOptions& opts);

enum class OverlapMode { kMax, kSum };
/// Unique-word intersection (default) or multiset intersection.
enum class OverlapCounting { kSet, kMultiset };

std::string_view to_string(OverlapMode m);
OverlapMode parse_overlap_mode(std::string_view s);

struct Hypothesis {
  std::string id;
  TokenSequence tokens;
};

struct OverlapBin {
  std::string label;
  std::size_t n = 0;
  std::optional<MetricReport> metrics;  // unset for an empty bin
};

struct OverlapReport {
  OverlapMode mode = OverlapMode::kMax;
  std::vector<OverlapBin> bins;
  std::size_t evidence_count = 0;
  std::size_t overlap_total = 0;

  /// Mean overlap of a single evidence with its ground truth.
  double mean_overlap_per_evidence() const {
    return evidence_count == 0
               ? 0.0
               : static_cast<double>(overlap_total) / evidence_count;
  }
};

std::size_t word_overlap(const TokenSequence& a, const TokenSequence& b,
                         OverlapCounting counting = OverlapCounting::kSet);

/// Bin label for an aggregated overlap: "0".."9", ">=10" (max) or
/// "[lo,hi)" with width 5 (sum).
std::string overlap_bin_label(OverlapMode mode, std::size_t value);

/// Bins each triple by the max or sum over its evidences of the word
/// overlap with the ground-truth response, then scores the hypotheses of
/// each bin. Max mode always lists the 11 bins 0..9, >=10; sum mode lists
/// consecutive width-5 bins from 0 up to the largest observed sum.
/// Throws MetricError naming the first id mismatch.
OverlapReport overlap_report(std::span<const TripleRecord> triples,
                             std::span<const Hypothesis> hyps, OverlapMode mode,
                             OverlapCounting counting = OverlapCounting::kSet,
                             const BleuOptions& opts = {});

nlohmann::ordered_json to_json(const OverlapReport& report,
                               const BleuOptions& opts);

}  // namespace selfret
