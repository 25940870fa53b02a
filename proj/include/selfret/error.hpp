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

#include <stdexcept>
#include <string>

namespace selfret {

enum class ErrorKind {
  kConfig,
  kIngest,
  kBuild,
  kLookup,
  kScore,
  kTransport,
  kRetrieval,
  kMetric,
  kIo,
  kInputMissing,
  kFormat,
};

const char* error_kind_name(ErrorKind kind);

/// Base for every error raised by the library. The kind doubles as the
/// machine-readable "error" field the CLI prints on failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  // Only transport failures are worth retrying.
  bool retryable() const noexcept { return kind_ == ErrorKind::kTransport; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(ErrorKind::kConfig, m) {}
};
struct IngestError : Error {
  explicit IngestError(const std::string& m) : Error(ErrorKind::kIngest, m) {}
};
struct BuildError : Error {
  explicit BuildError(const std::string& m) : Error(ErrorKind::kBuild, m) {}
};
struct LookupError : Error {
  explicit LookupError(const std::string& m) : Error(ErrorKind::kLookup, m) {}
};
struct ScoreError : Error {
  explicit ScoreError(const std::string& m) : Error(ErrorKind::kScore, m) {}
};
struct TransportError : Error {
  explicit TransportError(const std::string& m)
      : Error(ErrorKind::kTransport, m) {}
};
struct RetrievalError : Error {
  explicit RetrievalError(const std::string& m)
      : Error(ErrorKind::kRetrieval, m) {}
};
struct MetricError : Error {
  explicit MetricError(const std::string& m) : Error(ErrorKind::kMetric, m) {}
};
struct IoError : Error {
  explicit IoError(const std::string& m) : Error(ErrorKind::kIo, m) {}
};
/// A required input file does not exist or cannot be opened.
struct InputMissingError : Error {
  explicit InputMissingError(const std::string& path)
      : Error(ErrorKind::kInputMissing, "input not found: '" + path + "'") {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& m) : Error(ErrorKind::kFormat, m) {}
};

}  // namespace selfret
