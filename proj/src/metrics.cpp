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

#include "selfret/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "selfret/error.hpp"

namespace selfret {

namespace {

// Length-prefixed key so token contents can never collide across n-grams.
std::string ngram_key(const TokenSequence& tokens, std::size_t start,
                      std::size_t n) {
  std::string key;
  for (std::size_t i = start; i < start + n; ++i) {
    key += std::to_string(tokens[i].size());
    key.push_back(':');
    key += tokens[i];
  }
  return key;
}

std::unordered_map<std::string, std::size_t> ngram_counts(
    const TokenSequence& tokens, std::size_t n) {
  std::unordered_map<std::string, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[ngram_key(tokens, i, n)];
  }
  return counts;
}

std::unordered_map<std::string, std::size_t> bag(const TokenSequence& tokens) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& t : tokens) ++counts[t];
  return counts;
}

}  // namespace

double unigram_f1(const TokenSequence& hyp, const TokenSequence& ref) {
  if (ref.empty()) throw MetricError("unigram_f1: empty reference");
  if (hyp.empty()) return 0.0;
  const auto ref_counts = bag(ref);
  std::size_t common = 0;
  for (const auto& [token, count] : bag(hyp)) {
    auto it = ref_counts.find(token);
    if (it != ref_counts.end()) common += std::min(count, it->second);
  }
  if (common == 0) return 0.0;
  const double p = static_cast<double>(common) / hyp.size();
  const double r = static_cast<double>(common) / ref.size();
  return 2.0 * p * r / (p + r);
}

double bleu(std::span<const TokenSequence> hyps,
            std::span<const TokenSequence> refs, const BleuOptions& opts) {
  if (hyps.size() != refs.size()) {
    throw MetricError("bleu: " + std::to_string(hyps.size()) +
                      " hypotheses vs " + std::to_string(refs.size()) +
                      " references");
  }
  if (hyps.empty()) throw MetricError("bleu: empty corpus");
  if (opts.max_n == 0) throw MetricError("bleu: max_n must be >= 1");

  std::vector<std::size_t> matched(opts.max_n + 1, 0);
  std::vector<std::size_t> total(opts.max_n + 1, 0);
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    if (refs[s].empty()) throw MetricError("bleu: empty reference");
    hyp_len += hyps[s].size();
    ref_len += refs[s].size();
    for (std::size_t n = 1; n <= opts.max_n; ++n) {
      const auto h = ngram_counts(hyps[s], n);
      const auto r = ngram_counts(refs[s], n);
      for (const auto& [gram, count] : h) {
        total[n] += count;
        auto it = r.find(gram);
        if (it != r.end()) matched[n] += std::min(count, it->second);
      }
    }
  }
  if (matched[1] == 0) return 0.0;

  double log_sum = 0.0;
  for (std::size_t n = 1; n <= opts.max_n; ++n) {
    const double denom = static_cast<double>(std::max<std::size_t>(1, total[n]));
    const double p = matched[n] == 0 ? opts.epsilon / denom : matched[n] / denom;
    log_sum += std::log(p) / static_cast<double>(opts.max_n);
  }
  const double bp =
      hyp_len > ref_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return bp * std::exp(log_sum);
}

double distinct_n(std::span<const TokenSequence> hyps, std::size_t n) {
  if (n == 0) throw MetricError("distinct_n: n must be >= 1");
  std::unordered_set<std::string> unique;
  std::size_t total = 0;
  for (const auto& h : hyps) {
    if (h.size() < n) continue;
    for (std::size_t i = 0; i + n <= h.size(); ++i) {
      unique.insert(ngram_key(h, i, n));
      ++total;
    }
  }
  if (total == 0) {
    throw MetricError("distinct_n: no " + std::to_string(n) + "-grams");
  }
  return static_cast<double>(unique.size()) / static_cast<double>(total);
}

MetricReport evaluate(std::span<const TokenSequence> hyps,
                      std::span<const TokenSequence> refs,
                      const BleuOptions& opts) {
  if (hyps.empty()) throw MetricError("evaluate: no examples");
  if (hyps.size() != refs.size()) {
    throw MetricError("evaluate: hypothesis/reference count mismatch");
  }
  MetricReport report;
  report.n_examples = hyps.size();
  double f1_sum = 0.0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    f1_sum += unigram_f1(hyps[i], refs[i]);
  }
  report.f1 = f1_sum / static_cast<double>(hyps.size());
  report.bleu = bleu(hyps, refs, opts);
  auto safe_distinct = [&](std::size_t n) {
    try {
      return distinct_n(hyps, n);
    } catch (const MetricError&) {
      return 0.0;
    }
  };
  report.dist1 = safe_distinct(1);
  report.dist2 = safe_distinct(2);
  return report;
}

nlohmann::ordered_json to_json(const MetricReport& report,
                               const BleuOptions& opts) {
  return {
      {"f1", report.f1},
      {"bleu", report.bleu},
      {"dist1", report.dist1 * 100.0},
      {"dist2", report.dist2 * 100.0},
      {"n", report.n_examples},
      {"meta",
       {{"bleu_max_n", opts.max_n},
        {"smoothing", "add-epsilon"},
        {"smoothing_epsilon", opts.epsilon},
        {"dist_level", "corpus"},
        {"dist_unit", "percent"}}},
  };
}

std::string_view to_string(OverlapMode m) {
  return m == OverlapMode::kMax ? "max" : "sum";
}

OverlapMode parse_overlap_mode(std::string_view s) {
  if (s == "max") return OverlapMode::kMax;
  if (s == "sum") return OverlapMode::kSum;
  throw ConfigError("unknown overlap mode '" + std::string(s) +
                    "' (expected max|sum)");
}

std::size_t word_overlap(const TokenSequence& a, const TokenSequence& b,
                         OverlapCounting counting) {
  if (counting == OverlapCounting::kSet) {
    const std::unordered_set<std::string> sa(a.begin(), a.end());
    const std::unordered_set<std::string> sb(b.begin(), b.end());
    return static_cast<std::size_t>(std::count_if(
        sa.begin(), sa.end(), [&](const std::string& t) { return sb.count(t) > 0; }));
  }
  const auto ba = bag(a);
  const auto bb = bag(b);
  std::size_t common = 0;
  for (const auto& [token, count] : ba) {
    auto it = bb.find(token);
    if (it != bb.end()) common += std::min(count, it->second);
  }
  return common;
}

namespace {

constexpr std::size_t kMaxBins = 10;  // "0".."9" then ">=10"
constexpr std::size_t kSumWidth = 5;

std::size_t bin_index(OverlapMode mode, std::size_t value) {
  return mode == OverlapMode::kMax ? std::min(value, kMaxBins) : value / kSumWidth;
}

std::string bin_label_at(OverlapMode mode, std::size_t index) {
  if (mode == OverlapMode::kMax) {
    return index >= kMaxBins ? ">=10" : std::to_string(index);
  }
  return "[" + std::to_string(index * kSumWidth) + "," +
         std::to_string((index + 1) * kSumWidth) + ")";
}

}  // namespace

std::string overlap_bin_label(OverlapMode mode, std::size_t value) {
  return bin_label_at(mode, bin_index(mode, value));
}

OverlapReport overlap_report(std::span<const TripleRecord> triples,
                             std::span<const Hypothesis> hyps, OverlapMode mode,
                             OverlapCounting counting, const BleuOptions& opts) {
  const std::size_t n = std::min(triples.size(), hyps.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (triples[i].instance.id != hyps[i].id) {
      throw MetricError("overlap: misaligned ids at position " +
                        std::to_string(i) + ": triple '" +
                        triples[i].instance.id + "' vs hypothesis '" +
                        hyps[i].id + "'");
    }
  }
  if (triples.size() != hyps.size()) {
    const std::string missing = triples.size() > hyps.size()
                                    ? triples[n].instance.id
                                    : hyps[n].id;
    throw MetricError("overlap: no counterpart for id '" + missing + "'");
  }

  OverlapReport report;
  report.mode = mode;
  std::vector<std::size_t> assignment(triples.size());
  std::size_t bin_count = mode == OverlapMode::kMax ? kMaxBins + 1 : 1;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const auto& truth = triples[i].instance.response.tokens;
    std::size_t agg = 0;
    for (const auto& e : triples[i].evidences) {
      const std::size_t o = word_overlap(tokenize(e.text), truth, counting);
      agg = mode == OverlapMode::kMax ? std::max(agg, o) : agg + o;
      report.overlap_total += o;
      ++report.evidence_count;
    }
    assignment[i] = bin_index(mode, agg);
    bin_count = std::max(bin_count, assignment[i] + 1);
  }

  std::vector<std::vector<TokenSequence>> bin_hyps(bin_count);
  std::vector<std::vector<TokenSequence>> bin_refs(bin_count);
  for (std::size_t i = 0; i < triples.size(); ++i) {
    bin_hyps[assignment[i]].push_back(hyps[i].tokens);
    bin_refs[assignment[i]].push_back(triples[i].instance.response.tokens);
  }
  for (std::size_t b = 0; b < bin_count; ++b) {
    OverlapBin bin;
    bin.label = bin_label_at(mode, b);
    bin.n = bin_hyps[b].size();
    if (bin.n > 0) bin.metrics = evaluate(bin_hyps[b], bin_refs[b], opts);
    report.bins.push_back(std::move(bin));
  }
  return report;
}

nlohmann::ordered_json to_json(const OverlapReport& report,
                               const BleuOptions& opts) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& bin : report.bins) {
    out.push_back({{"bin", bin.label},
                   {"n", bin.n},
                   {"metrics", bin.metrics ? to_json(*bin.metrics, opts)
                                           : nlohmann::ordered_json(nullptr)}});
  }
  return out;
}

}  // namespace selfret
