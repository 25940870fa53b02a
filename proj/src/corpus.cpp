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

#include "selfret/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <numeric>
#include <random>
#include <unordered_set>

#include "selfret/error.hpp"
#include "selfret/io.hpp"

namespace selfret {

Utterance Utterance::make(Speaker speaker, std::string text) {
  if (!has_visible_text(text)) throw FormatError("utterance text is blank");
  Utterance u;
  u.speaker = speaker;
  u.tokens = tokenize(text);
  u.text = std::move(text);
  return u;
}

void validate_instance(const DialogueInstance& instance) {
  auto fail = [&](const std::string& what) {
    return FormatError("instance '" + instance.id + "': " + what);
  };
  if (instance.id.empty()) throw FormatError("instance with empty id");
  if (instance.context.empty()) throw fail("empty context");
  for (std::size_t i = 0; i < instance.context.size(); ++i) {
    const auto& u = instance.context[i];
    if (!has_visible_text(u.text)) throw fail("blank context utterance");
    if (i > 0 && u.speaker == instance.context[i - 1].speaker) {
      throw fail("context speakers do not alternate");
    }
  }
  if (!has_visible_text(instance.response.text)) throw fail("blank response");
  if (instance.response.speaker == instance.latest().speaker) {
    throw fail("response speaker equals last context speaker");
  }
}

void Corpus::check_unique_ids() const {
  std::unordered_set<std::string> seen;
  seen.reserve(instances.size());
  for (const auto& inst : instances) {
    if (!seen.insert(inst.id).second) {
      throw BuildError("corpus '" + name + "': duplicate instance id '" +
                       inst.id + "'");
    }
  }
}

nlohmann::ordered_json to_json(const IngestReport& report) {
  return {
      {"read", report.read},
      {"emitted", report.emitted},
      {"skipped_malformed", report.skipped_malformed},
      {"discarded_by_limits", report.discarded_by_limits},
      {"limits",
       {{"max_turns", report.limits.max_turns},
        {"max_tokens_per_utterance", report.limits.max_tokens_per_utterance}}},
  };
}

namespace {

void check_limits(const PreprocessLimits& limits) {
  if (limits.max_turns == 0 || limits.max_tokens_per_utterance == 0) {
    throw ConfigError("preprocess limits must be strictly positive");
  }
}

bool within_limits(const DialogueInstance& inst,
                   const PreprocessLimits& limits) {
  if (inst.context.size() > limits.max_turns) return false;
  auto fits = [&](const Utterance& u) {
    return u.tokens.size() <= limits.max_tokens_per_utterance;
  };
  return std::all_of(inst.context.begin(), inst.context.end(), fits) &&
         fits(inst.response);
}

}  // namespace

ChainIngestor::ChainIngestor(std::string source_tag, PreprocessLimits limits)
    : source_tag_(std::move(source_tag)), limits_(limits) {
  check_limits(limits_);
  result_.corpus.name = source_tag_;
  result_.report.limits = limits_;
}

void ChainIngestor::add(const RawRecord& record) {
  auto& report = result_.report;
  ++report.read;
  if (record.thread_id.empty() || !record.text ||
      !has_visible_text(*record.text) || by_id_.count(record.thread_id)) {
    ++report.skipped_malformed;
    return;
  }
  std::optional<std::size_t> parent;
  std::size_t depth = 0;
  if (record.parent_id) {
    auto it = by_id_.find(*record.parent_id);
    if (it == by_id_.end()) {
      ++report.skipped_malformed;
      return;
    }
    parent = it->second;
    depth = nodes_[it->second].depth + 1;
  }
  const Speaker speaker = depth % 2 == 0 ? Speaker::kOne : Speaker::kTwo;
  const std::size_t index = nodes_.size();
  nodes_.push_back({parent, depth, Utterance::make(speaker, *record.text)});
  by_id_.emplace(record.thread_id, index);
  if (!parent) return;

  DialogueInstance inst;
  inst.id = source_tag_ + ":" + record.thread_id;
  inst.source_tag = source_tag_;
  inst.response = nodes_[index].utterance;
  for (auto p = parent; p; p = nodes_[*p].parent) {
    inst.context.push_back(nodes_[*p].utterance);
  }
  std::reverse(inst.context.begin(), inst.context.end());
  if (!within_limits(inst, limits_)) {
    ++report.discarded_by_limits;
    return;
  }
  ++report.emitted;
  result_.corpus.instances.push_back(std::move(inst));
}

IngestResult ChainIngestor::finish() && { return std::move(result_); }

IngestResult ingest_reddit_chains(std::span<const RawRecord> records,
                                  const std::string& source_tag,
                                  const PreprocessLimits& limits) {
  ChainIngestor ingestor(source_tag, limits);
  for (const auto& r : records) ingestor.add(r);
  return std::move(ingestor).finish();
}

namespace {

nlohmann::json parse_stream_line(const std::string& line, std::size_t lineno) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw IngestError("corrupt raw stream at line " + std::to_string(lineno) +
                      ": " + e.what());
  }
  if (!j.is_object()) {
    throw IngestError("corrupt raw stream at line " + std::to_string(lineno) +
                      ": expected a JSON object");
  }
  return j;
}

std::optional<std::string> string_field(const nlohmann::json& j,
                                        const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) return std::nullopt;
  return it->get<std::string>();
}

template <typename Fn>
void for_each_stream_line(std::istream& in, Fn&& fn) {
  if (!in) throw IngestError("raw stream is not readable");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fn(parse_stream_line(line, lineno));
  }
  if (in.bad()) throw IngestError("read error in raw stream");
}

}  // namespace

IngestResult ingest_reddit_chains(std::istream& raw,
                                  const std::string& source_tag,
                                  const PreprocessLimits& limits) {
  ChainIngestor ingestor(source_tag, limits);
  for_each_stream_line(raw, [&](const nlohmann::json& j) {
    RawRecord r;
    if (auto id = string_field(j, "thread_id")) r.thread_id = *id;
    auto parent = j.find("parent_id");
    if (parent != j.end() && !parent->is_null()) {
      // A non-string parent cannot be resolved; treat it as dangling.
      r.parent_id = parent->is_string() ? parent->get<std::string>()
                                        : std::string("\x01invalid");
    }
    r.text = string_field(j, "text");
    if (auto author = string_field(j, "author")) r.author = *author;
    ingestor.add(r);
  });
  return std::move(ingestor).finish();
}

IngestResult ingest_sessions(std::istream& raw, const std::string& source_tag,
                             const PreprocessLimits& limits) {
  ChainIngestor ingestor(source_tag, limits);
  for_each_stream_line(raw, [&](const nlohmann::json& j) {
    auto id = string_field(j, "id");
    auto turns = j.find("turns");
    if (!id || turns == j.end() || !turns->is_array()) {
      RawRecord bad;
      ingestor.add(bad);
      return;
    }
    std::optional<std::string> parent;
    for (std::size_t i = 0; i < turns->size(); ++i) {
      RawRecord r;
      r.thread_id = *id + "#" + std::to_string(i);
      r.parent_id = parent;
      if ((*turns)[i].is_string()) r.text = (*turns)[i].get<std::string>();
      ingestor.add(r);
      parent = r.thread_id;
    }
  });
  return std::move(ingestor).finish();
}

Corpus preprocess(const Corpus& corpus, const PreprocessLimits& limits) {
  check_limits(limits);
  Corpus out;
  out.name = corpus.name;
  for (const auto& inst : corpus.instances) {
    if (within_limits(inst, limits)) out.instances.push_back(inst);
  }
  return out;
}

SplitResult split(const Corpus& corpus, const SplitSpec& spec) {
  const std::size_t n = corpus.size();
  const std::size_t fixed = spec.train_size + spec.dev_size + spec.test_size;
  std::vector<std::size_t> pool_sizes;
  if (spec.extra_pool_sizes) {
    pool_sizes = *spec.extra_pool_sizes;
  } else if (n > fixed) {
    pool_sizes.push_back(n - fixed);
  }
  const std::size_t needed =
      std::accumulate(pool_sizes.begin(), pool_sizes.end(), fixed);
  if (needed > n) {
    throw ConfigError("split needs " + std::to_string(needed) +
                      " instances but corpus '" + corpus.name + "' has " +
                      std::to_string(n) + " (deficit " +
                      std::to_string(needed - n) + ")");
  }
  corpus.check_unique_ids();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 engine(spec.seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(i, engine));
    std::swap(order[i - 1], order[j]);
  }

  std::size_t cursor = 0;
  auto take = [&](std::size_t count, const std::string& tag) {
    std::vector<std::size_t> picked(order.begin() + static_cast<long>(cursor),
                                    order.begin() + static_cast<long>(cursor + count));
    cursor += count;
    std::sort(picked.begin(), picked.end());
    Corpus c;
    c.name = corpus.name + "/" + tag;
    c.instances.reserve(count);
    for (auto i : picked) c.instances.push_back(corpus.instances[i]);
    return c;
  };

  SplitResult out;
  out.train = take(spec.train_size, "train");
  out.dev = take(spec.dev_size, "dev");
  out.test = take(spec.test_size, "test");
  for (std::size_t p = 0; p < pool_sizes.size(); ++p) {
    out.extra_pools.push_back(take(pool_sizes[p], "extra_" + std::to_string(p)));
  }
  return out;
}

nlohmann::ordered_json to_json(const Utterance& u) {
  return {{"speaker", static_cast<int>(u.speaker)}, {"text", u.text}};
}

nlohmann::ordered_json to_json(const DialogueInstance& instance) {
  nlohmann::ordered_json ctx = nlohmann::ordered_json::array();
  for (const auto& u : instance.context) ctx.push_back(to_json(u));
  return {
      {"id", instance.id},
      {"source", instance.source_tag},
      {"context", std::move(ctx)},
      {"response", to_json(instance.response)},
  };
}

namespace {

Utterance utterance_from_json(const nlohmann::json& j) {
  const int speaker = j.at("speaker").get<int>();
  if (speaker != 1 && speaker != 2) {
    throw FormatError("speaker must be 1 or 2");
  }
  return Utterance::make(static_cast<Speaker>(speaker),
                         j.at("text").get<std::string>());
}

}  // namespace

DialogueInstance instance_from_json(const nlohmann::json& j) {
  DialogueInstance inst;
  try {
    inst.id = j.at("id").get<std::string>();
    inst.source_tag = j.value("source", std::string());
    for (const auto& u : j.at("context")) {
      inst.context.push_back(utterance_from_json(u));
    }
    inst.response = utterance_from_json(j.at("response"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed instance: ") + e.what());
  }
  validate_instance(inst);
  return inst;
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& inst : corpus.instances) {
    out << to_json(inst).dump() << '\n';
  }
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  AtomicFile file(path);
  write_corpus(file.stream(), corpus);
  file.commit();
}

Corpus read_corpus(std::istream& in, std::string name) {
  Corpus corpus;
  corpus.name = std::move(name);
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      auto inst = instance_from_json(nlohmann::json::parse(line));
      if (!seen.insert(inst.id).second) {
        throw FormatError("duplicate instance id '" + inst.id + "'");
      }
      corpus.instances.push_back(std::move(inst));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(corpus.name + ":" + std::to_string(lineno) + ": " +
                        e.what());
    } catch (const FormatError& e) {
      throw FormatError(corpus.name + ":" + std::to_string(lineno) + ": " +
                        e.what());
    }
  }
  return corpus;
}

Corpus read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputMissingError(path.string());
  return read_corpus(in, path.stem().string());
}

}  // namespace selfret
