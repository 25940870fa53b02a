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

#include "selfret/bertscore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>
#include <vector>

#include "selfret/error.hpp"

namespace selfret {

IdfWeights compute_idf(std::span<const TokenSequence> docs) {
  std::unordered_map<std::string, std::size_t> df;
  for (const auto& doc : docs) {
    std::unordered_set<std::string> seen(doc.begin(), doc.end());
    for (const auto& t : seen) ++df[t];
  }
  const double m = static_cast<double>(docs.size());
  IdfWeights idf;
  idf.default_weight = std::log(m + 1.0);
  idf.weights.reserve(df.size());
  for (const auto& [token, count] : df) {
    idf.weights.emplace(token, std::log((m + 1.0) / (count + 1.0)));
  }
  return idf;
}

namespace {

double dot(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(a[i]) * b[i];
  }
  return acc;
}

// Stored rows are unit length only to float precision. F = 2PR/(P+R) is
// badly conditioned near P+R = 0, so the residual norm is divided out here.
std::vector<double> inverse_norms(MatrixView m) {
  std::vector<double> inv(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    inv[i] = 1.0 / std::sqrt(dot(m.row(i), m.row(i)));
  }
  return inv;
}

double weighted_mean(const std::vector<double>& best,
                     std::span<const std::string> tokens,
                     const IdfWeights* idf) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < best.size(); ++i) {
    const double w = idf ? idf->weight(tokens[i]) : 1.0;
    num += w * best[i];
    den += w;
  }
  if (den == 0.0) throw ScoreError("bertscore: idf weights sum to zero");
  return num / den;
}

}  // namespace

MatchScore bertscore(const EmbeddedText& cand, const EmbeddedText& ref,
                     const IdfWeights* idf) {
  const std::size_t n = cand.matrix.rows();
  const std::size_t m = ref.matrix.rows();
  if (n == 0 || m == 0) throw ScoreError("bertscore: empty side");
  if (cand.matrix.dim != ref.matrix.dim) {
    throw ScoreError("bertscore: embedding dims differ");
  }
  if (idf && (cand.tokens.size() != n || ref.tokens.size() != m)) {
    throw ScoreError("bertscore: token count does not match embedding rows");
  }

  constexpr double kLow = -std::numeric_limits<double>::infinity();
  std::vector<double> cand_best(n, kLow);
  std::vector<double> ref_best(m, kLow);
  const auto cand_inv = inverse_norms(cand.matrix);
  const auto ref_inv = inverse_norms(ref.matrix);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ci = cand.matrix.row(i);
    for (std::size_t j = 0; j < m; ++j) {
      const double s = std::clamp(dot(ci, ref.matrix.row(j)) * (cand_inv[i] * ref_inv[j]),
                                  -1.0, 1.0);
      if (s > cand_best[i]) cand_best[i] = s;
      if (s > ref_best[j]) ref_best[j] = s;
    }
  }
  const double precision = weighted_mean(cand_best, cand.tokens, idf);
  const double recall = weighted_mean(ref_best, ref.tokens, idf);
  return MatchScore::from_precision_recall(precision, recall);
}

}  // namespace selfret
