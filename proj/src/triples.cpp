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

#include "selfret/triples.hpp"

#include <fstream>
#include <istream>

#include "selfret/error.hpp"
#include "selfret/io.hpp"
#include "selfret/parallel.hpp"

namespace selfret {

std::string_view to_string(SplitTag t) {
  switch (t) {
    case SplitTag::kTrain: return "train";
    case SplitTag::kDev: return "dev";
    case SplitTag::kTest: return "test";
  }
  return "?";
}

std::string_view to_string(FormatMode m) {
  return m == FormatMode::kGptConcat ? "gpt" : "fid";
}

SplitTag parse_split_tag(std::string_view s) {
  if (s == "train") return SplitTag::kTrain;
  if (s == "dev") return SplitTag::kDev;
  if (s == "test") return SplitTag::kTest;
  throw FormatError("unknown split '" + std::string(s) + "'");
}

FormatMode parse_format_mode(std::string_view s) {
  if (s == "gpt") return FormatMode::kGptConcat;
  if (s == "fid") return FormatMode::kFid;
  throw ConfigError("unknown format mode '" + std::string(s) +
                    "' (expected gpt|fid)");
}

std::vector<TripleRecord> build_triples(const Corpus& split,
                                        const RetrievalSet& set,
                                        const RetrievalConfig& cfg,
                                        SplitTag tag, std::size_t workers) {
  cfg.validate();
  std::vector<TripleRecord> out(split.size());
  parallel_for(split.size(), workers, [&](std::size_t i) {
    const auto& inst = split.instances[i];
    try {
      out[i].instance = inst;
      out[i].evidences = apply_filter(retrieve(inst, set, cfg), cfg.tau);
      out[i].split_tag = tag;
    } catch (const Error& e) {
      throw Error(e.kind(), "instance '" + inst.id + "': " + e.what());
    }
  });
  return out;
}

namespace {

std::string neutralize_markers(std::string text) {
  static constexpr std::pair<std::string_view, std::string_view> kSwaps[] = {
      {"[p]", "[ p ]"},
      {"[speaker1]", "[ speaker1 ]"},
      {"[speaker2]", "[ speaker2 ]"},
  };
  for (const auto& [from, to] : kSwaps) {
    std::size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
      text.replace(pos, from.size(), to);
      pos += to.size();
    }
  }
  return text;
}

std::string evidence_prefix(const Evidence& e) {
  return std::string(kPassageMarker) + " " + neutralize_markers(e.text);
}

}  // namespace

std::string render_context(const std::vector<Utterance>& context) {
  std::string out;
  for (std::size_t i = 0; i < context.size(); ++i) {
    if (i) out.push_back(' ');
    out += i % 2 == 0 ? kSpeaker1Marker : kSpeaker2Marker;
    out.push_back(' ');
    out += neutralize_markers(context[i].text);
  }
  return out;
}

FormattedExample format_gpt(const TripleRecord& rec) {
  std::string input;
  for (const auto& e : rec.evidences) {
    input += evidence_prefix(e);
    input.push_back(' ');
  }
  input += render_context(rec.instance.context);
  return {rec.instance.id, FormatMode::kGptConcat, std::move(input),
          rec.instance.response.text};
}

FormattedExample format_fid(const TripleRecord& rec) {
  const std::string context = render_context(rec.instance.context);
  std::vector<std::string> passages;
  passages.reserve(rec.evidences.size() + 1);
  for (const auto& e : rec.evidences) {
    passages.push_back(evidence_prefix(e) + " " + context);
  }
  passages.push_back(context);
  return {rec.instance.id, FormatMode::kFid, std::move(passages),
          rec.instance.response.text};
}

FormattedExample format(const TripleRecord& rec, FormatMode mode) {
  return mode == FormatMode::kGptConcat ? format_gpt(rec) : format_fid(rec);
}

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return 0;
  std::size_t count = 0;
  for (std::size_t pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

nlohmann::ordered_json to_json(const TripleRecord& rec) {
  nlohmann::ordered_json ctx = nlohmann::ordered_json::array();
  for (const auto& u : rec.instance.context) ctx.push_back(to_json(u));
  nlohmann::ordered_json evs = nlohmann::ordered_json::array();
  for (const auto& e : rec.evidences) {
    evs.push_back({
        {"source_id", e.source_id},
        {"text", e.text},
        {"f", e.score.f},
        {"p", e.score.precision},
        {"r", e.score.recall},
        {"strategy", to_string(e.strategy)},
        {"rank", e.rank},
    });
  }
  return {
      {"id", rec.instance.id},
      {"split", to_string(rec.split_tag)},
      {"source", rec.instance.source_tag},
      {"context", std::move(ctx)},
      {"response", rec.instance.response.text},
      {"evidences", std::move(evs)},
  };
}

TripleRecord triple_from_json(const nlohmann::json& j) {
  TripleRecord rec;
  try {
    auto& inst = rec.instance;
    inst.id = j.at("id").get<std::string>();
    inst.source_tag = j.value("source", std::string());
    rec.split_tag = parse_split_tag(j.at("split").get<std::string>());
    for (const auto& u : j.at("context")) {
      const int speaker = u.at("speaker").get<int>();
      if (speaker != 1 && speaker != 2) throw FormatError("speaker must be 1 or 2");
      inst.context.push_back(Utterance::make(static_cast<Speaker>(speaker),
                                             u.at("text").get<std::string>()));
    }
    if (inst.context.empty()) throw FormatError("triple with empty context");
    inst.response = Utterance::make(other(inst.latest().speaker),
                                    j.at("response").get<std::string>());
    std::size_t position = 0;
    for (const auto& e : j.at("evidences")) {
      Evidence ev;
      ev.source_id = e.at("source_id").get<std::string>();
      ev.text = e.at("text").get<std::string>();
      ev.score.f = e.at("f").get<double>();
      ev.score.precision = e.value("p", 0.0);
      ev.score.recall = e.value("r", 0.0);
      ev.strategy = parse_origin(e.value("strategy", std::string("c2c")));
      ev.rank = e.value("rank", position + 1);
      rec.evidences.push_back(std::move(ev));
      ++position;
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed triple: ") + e.what());
  }
  validate_instance(rec.instance);
  return rec;
}

nlohmann::ordered_json to_json(const FormattedExample& ex) {
  nlohmann::ordered_json input;
  if (const auto* s = std::get_if<std::string>(&ex.input)) {
    input = *s;
  } else {
    input = std::get<std::vector<std::string>>(ex.input);
  }
  return {{"id", ex.id},
          {"mode", to_string(ex.mode)},
          {"input", std::move(input)},
          {"target", ex.target}};
}

FormattedExample formatted_from_json(const nlohmann::json& j) {
  FormattedExample ex;
  try {
    ex.id = j.at("id").get<std::string>();
    ex.mode = parse_format_mode(j.at("mode").get<std::string>());
    const auto& input = j.at("input");
    if (input.is_string()) {
      ex.input = input.get<std::string>();
    } else {
      ex.input = input.get<std::vector<std::string>>();
    }
    ex.target = j.at("target").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed formatted example: ") + e.what());
  }
  return ex;
}

nlohmann::ordered_json evidence_dump_json(const TripleRecord& rec,
                                          Strategy strategy) {
  nlohmann::ordered_json evs = nlohmann::ordered_json::array();
  for (const auto& e : rec.evidences) {
    evs.push_back({
        {"source_id", e.source_id},
        {"text", e.text},
        {"p", e.score.precision},
        {"r", e.score.recall},
        {"f", e.score.f},
        {"rank", e.rank},
    });
  }
  return {{"query_id", rec.instance.id},
          {"strategy", to_string(strategy)},
          {"evidences", std::move(evs)}};
}

void write_triples(std::ostream& out, const std::vector<TripleRecord>& recs) {
  for (const auto& r : recs) out << to_json(r).dump() << '\n';
}

void write_triples(const std::filesystem::path& path,
                   const std::vector<TripleRecord>& recs) {
  AtomicFile file(path);
  write_triples(file.stream(), recs);
  file.commit();
}

std::vector<TripleRecord> read_triples(std::istream& in) {
  std::vector<TripleRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      out.push_back(triple_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("triples line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw FormatError("triples line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<TripleRecord> read_triples(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputMissingError(path.string());
  return read_triples(in);
}

void write_formatted(const std::filesystem::path& path,
                     const std::vector<FormattedExample>& examples) {
  AtomicFile file(path);
  for (const auto& ex : examples) file.stream() << to_json(ex).dump() << '\n';
  file.commit();
}

std::vector<FormattedExample> read_formatted(const std::filesystem::path& path) {
  std::vector<FormattedExample> out;
  for_each_line(path, [&](std::string_view line, std::size_t lineno) {
    try {
      out.push_back(formatted_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("formatted line " + std::to_string(lineno) + ": " + e.what());
    }
  });
  return out;
}

}  // namespace selfret
