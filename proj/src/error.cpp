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

#include "selfret/error.hpp"

namespace selfret {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return "configuration error";
    case ErrorKind::kIngest: return "ingest error";
    case ErrorKind::kBuild: return "build error";
    case ErrorKind::kLookup: return "lookup error";
    case ErrorKind::kScore: return "score error";
    case ErrorKind::kTransport: return "transport error";
    case ErrorKind::kRetrieval: return "retrieval error";
    case ErrorKind::kMetric: return "metric error";
    case ErrorKind::kIo: return "io error";
    case ErrorKind::kInputMissing: return "input not found";
    case ErrorKind::kFormat: return "format error";
  }
  return "error";
}

}  // namespace selfret
