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

namespace selfret {

/// Result of a single match. Embedding scorers fill all three fields;
/// BM25 fills only `f` with its nonnegative scalar.
struct MatchScore {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;

  static MatchScore from_precision_recall(double p, double r) {
    const double sum = p + r;
    return {p, r, sum != 0.0 ? 2.0 * p * r / sum : 0.0};
  }
  static MatchScore scalar(double value) { return {0.0, 0.0, value}; }

  friend bool operator==(const MatchScore&, const MatchScore&) = default;
};

}  // namespace selfret
