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

#include <httplib.h>

#include <semaphore>
#include <thread>

#include "json.hpp"
#include "selfret/embedding.hpp"
#include "selfret/error.hpp"

namespace selfret {

struct HttpEmbeddingBackend::Limiter {
  explicit Limiter(std::size_t n)
      : slots(static_cast<std::ptrdiff_t>(n)) {}
  std::counting_semaphore<> slots;
};

namespace {

class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<>& s) : s_(s) { s_.acquire(); }
  ~SlotGuard() { s_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<>& s_;
};

}  // namespace

HttpEmbeddingBackend::HttpEmbeddingBackend(HttpBackendOptions options)
    : options_(std::move(options)) {
  if (options_.dim == 0) throw ConfigError("http backend: dim must be > 0");
  if (options_.max_in_flight == 0) {
    throw ConfigError("http backend: max_in_flight must be > 0");
  }
  limiter_ = std::make_unique<Limiter>(options_.max_in_flight);
}

HttpEmbeddingBackend::~HttpEmbeddingBackend() = default;

std::string HttpEmbeddingBackend::backend_id() const {
  return "http:" + options_.model + ":" + std::to_string(options_.dim);
}

EmbeddingMatrix HttpEmbeddingBackend::embed(const TokenSequence& tokens) const {
  if (tokens.empty()) return EmbeddingMatrix::from_unit_rows(options_.dim, {});
  const std::string body = nlohmann::json{{"tokens", tokens}}.dump();

  std::string last_error;
  for (int attempt = 0; attempt <= options_.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(50 << attempt));
    }
    httplib::Result res;
    {
      SlotGuard guard(limiter_->slots);
      httplib::Client client(options_.host, options_.port);
      client.set_connection_timeout(options_.timeout_seconds, 0);
      client.set_read_timeout(options_.timeout_seconds, 0);
      res = client.Post("/embed", body, "application/json");
    }
    if (!res) {
      last_error = "embedding service unreachable at " + options_.host + ":" +
                   std::to_string(options_.port) + " (" +
                   httplib::to_string(res.error()) + ")";
      continue;
    }
    if (res->status != 200) {
      last_error = "embedding service returned HTTP " +
                   std::to_string(res->status);
      continue;
    }

    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("embedding service: bad JSON reply: ") +
                        e.what());
    }
    const auto dim = reply.value("dim", std::size_t{0});
    if (dim != options_.dim) {
      throw ConfigError("embedding service dim " + std::to_string(dim) +
                        " differs from configured dim " +
                        std::to_string(options_.dim));
    }
    const auto& vectors = reply.at("vectors");
    if (!vectors.is_array() || vectors.size() != tokens.size()) {
      throw FormatError("embedding service returned " +
                        std::to_string(vectors.size()) + " vectors for " +
                        std::to_string(tokens.size()) + " tokens");
    }
    std::vector<float> data;
    data.reserve(tokens.size() * dim);
    for (const auto& row : vectors) {
      if (!row.is_array() || row.size() != dim) {
        throw ConfigError("embedding service returned a row of length " +
                          std::to_string(row.size()) + ", expected " +
                          std::to_string(dim));
      }
      for (const auto& x : row) data.push_back(x.get<float>());
    }
    return EmbeddingMatrix::from_raw(dim, std::move(data));
  }
  throw TransportError(last_error);
}

}  // namespace selfret
