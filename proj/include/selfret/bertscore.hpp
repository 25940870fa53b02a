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

#include <span>
#include <string>
#include <unordered_map>

#include "selfret/embedding.hpp"
#include "selfret/match_score.hpp"
#include "selfret/text.hpp"

namespace selfret {

/// A sentence side for greedy matching: its tokens and one unit row each.
struct EmbeddedText {
  std::span<const std::string> tokens;
  MatrixView matrix;
};

/// Per-token importance weights. Tokens not in the map get `default_weight`.
struct IdfWeights {
  std::unordered_map<std::string, double> weights;
  double default_weight = 1.0;

  double weight(const std::string& token) const {
    auto it = weights.find(token);
    return it == weights.end() ? default_weight : it->second;
  }
};

/// idf(w) = ln((M + 1) / (df(w) + 1)) over M documents; unseen words get
/// ln(M + 1).
IdfWeights compute_idf(std::span<const TokenSequence> docs);

/// Greedy cosine matching. Precision averages, over candidate rows, the best
/// cosine against any reference row; recall does the same from the
/// reference side; f is their harmonic mean. With `idf`, the averages are
/// weighted by the token weights of the averaging side.
///
/// Throws ScoreError when either side is empty or when dims disagree.
MatchScore bertscore(const EmbeddedText& cand, const EmbeddedText& ref,
                     const IdfWeights* idf = nullptr);

}  // namespace selfret
