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

#include "selfret/cli/commands.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unordered_map>

#include "CLI11.hpp"
#include "selfret/digest.hpp"
#include "selfret/error.hpp"
#include "selfret/io.hpp"

namespace selfret::cli {

namespace {

using ojson = nlohmann::ordered_json;

void require_input(const std::filesystem::path& p) {
  if (p.empty() || !std::filesystem::exists(p)) {
    throw InputMissingError(p.string());
  }
}

void require_dir(const std::filesystem::path& p, const char* key) {
  if (p.empty()) throw ConfigError(std::string("config: paths.") + key + " is required");
}

// Removes every registered output unless dismissed; keeps failed runs from
// leaving a mix of old and new artifacts behind.
class OutputGuard {
 public:
  ~OutputGuard() {
    if (dismissed_) return;
    for (const auto& p : written_) {
      std::error_code ec;
      std::filesystem::remove(p, ec);
    }
  }
  void add(std::filesystem::path p) { written_.push_back(std::move(p)); }
  void dismiss() { dismissed_ = true; }

 private:
  std::vector<std::filesystem::path> written_;
  bool dismissed_ = false;
};

}  // namespace

std::filesystem::path split_path(const RunConfig& cfg, const std::string& name) {
  return cfg.paths.splits_dir / (name + ".jsonl");
}

std::filesystem::path triples_path(const RunConfig& cfg, SplitTag tag) {
  return cfg.paths.output_dir / ("triples_" + std::string(to_string(tag)) + ".jsonl");
}

std::filesystem::path evidence_path(const RunConfig& cfg, SplitTag tag) {
  return cfg.paths.output_dir / ("evidence_" + std::string(to_string(tag)) + ".jsonl");
}

std::filesystem::path formatted_path(const RunConfig& cfg, FormatMode mode,
                                     SplitTag tag) {
  return cfg.paths.output_dir / ("formatted_" + std::string(to_string(mode)) +
                                 "_" + std::string(to_string(tag)) + ".jsonl");
}

IngestReport cmd_ingest(const IngestOptions& opts, std::ostream& log) {
  std::ifstream in(opts.input, std::ios::binary);
  if (!in) throw InputMissingError(opts.input.string());
  IngestResult result;
  if (opts.raw_format == "chains") {
    result = ingest_reddit_chains(in, opts.source, opts.limits);
  } else if (opts.raw_format == "sessions") {
    result = ingest_sessions(in, opts.source, opts.limits);
  } else {
    throw ConfigError("ingest: unknown raw format '" + opts.raw_format +
                      "' (expected chains|sessions)");
  }
  if (result.report.read == 0) {
    log << "warning: raw input '" << opts.input.string()
        << "' is empty; writing an empty corpus\n";
  }
  auto report_path = opts.report.value_or(
      std::filesystem::path(opts.output.string() + ".report.json"));
  OutputGuard guard;
  write_corpus(opts.output, result.corpus);
  guard.add(opts.output);
  write_file_atomic(report_path, to_json(result.report).dump(2) + "\n");
  guard.dismiss();
  return result.report;
}

SplitResult cmd_split(const RunConfig& cfg, std::ostream& log) {
  require_input(cfg.paths.corpus);
  require_dir(cfg.paths.splits_dir, "splits_dir");
  const Corpus corpus = read_corpus(cfg.paths.corpus);
  SplitSpec spec = cfg.split;
  spec.seed = cfg.seed;
  SplitResult result = split(corpus, spec);

  OutputGuard guard;
  ojson sizes = {{"train", result.train.size()},
                 {"dev", result.dev.size()},
                 {"test", result.test.size()},
                 {"extra", ojson::array()}};
  auto emit = [&](const Corpus& c, const std::string& name) {
    const auto p = split_path(cfg, name);
    write_corpus(p, c);
    guard.add(p);
  };
  emit(result.train, "train");
  emit(result.dev, "dev");
  emit(result.test, "test");
  for (std::size_t i = 0; i < result.extra_pools.size(); ++i) {
    emit(result.extra_pools[i], "extra_" + std::to_string(i));
    sizes["extra"].push_back(result.extra_pools[i].size());
  }
  const ojson manifest = {{"config_digest", cfg.digest()},
                          {"seed", cfg.seed},
                          {"corpus", cfg.paths.corpus.string()},
                          {"sizes", sizes}};
  write_file_atomic(cfg.paths.splits_dir / "split_manifest.json",
                    manifest.dump(2) + "\n");
  guard.dismiss();
  log << "split: train=" << result.train.size() << " dev=" << result.dev.size()
      << " test=" << result.test.size()
      << " extra_pools=" << result.extra_pools.size() << "\n";
  return result;
}

namespace {

struct RetrievalInputs {
  Corpus train;
  std::vector<Corpus> extra;
};

RetrievalInputs load_retrieval_inputs(const RunConfig& cfg) {
  RetrievalInputs in;
  const auto& corpora = cfg.retrieval.retrieval_corpora;
  if (!corpora.empty()) {
    for (const auto& p : corpora) require_input(p);
    in.train = read_corpus(corpora.front());
    for (std::size_t i = 1; i < corpora.size(); ++i) {
      in.extra.push_back(read_corpus(corpora[i]));
    }
    return in;
  }
  require_dir(cfg.paths.splits_dir, "splits_dir");
  const auto train = split_path(cfg, "train");
  require_input(train);
  in.train = read_corpus(train);
  for (std::size_t i = 0; i < cfg.retrieval.extra_pools; ++i) {
    const auto p = split_path(cfg, "extra_" + std::to_string(i));
    require_input(p);
    in.extra.push_back(read_corpus(p));
  }
  return in;
}

struct BuiltSet {
  std::unique_ptr<EmbeddingBackend> backend;
  RetrievalSet set;
};

BuiltSet build_set(const RunConfig& cfg, bool force_embeddings) {
  const auto inputs = load_retrieval_inputs(cfg);
  std::unique_ptr<EmbeddingBackend> backend;
  if (force_embeddings || cfg.retrieval.retrieval.scorer == Scorer::kBertScore) {
    backend = make_backend(cfg.backend);
  }
  RetrievalSetOptions opts;
  opts.context_side = cfg.retrieval.context_side;
  opts.bm25 = cfg.retrieval.bm25;
  opts.workers = cfg.workers;
  if (!cfg.paths.cache_dir.empty() && backend) opts.cache_dir = cfg.paths.cache_dir;
  auto set = RetrievalSet::build(inputs.train, inputs.extra, backend.get(), opts);
  return {std::move(backend), std::move(set)};
}

}  // namespace

void cmd_build_index(const RunConfig& cfg, std::ostream& log) {
  require_dir(cfg.paths.cache_dir, "cache_dir");
  const auto built = build_set(cfg, /*force_embeddings=*/true);
  log << "build-index: members=" << built.set.size()
      << " backend=" << built.backend->backend_id()
      << " digest=" << built.set.cache_digest()
      << (built.set.loaded_from_cache() ? " (cached)" : "") << "\n";
}

void cmd_retrieve(const RunConfig& cfg, std::ostream& log) {
  require_dir(cfg.paths.output_dir, "output_dir");
  require_dir(cfg.paths.splits_dir, "splits_dir");
  for (auto tag : cfg.retrieval.splits) {
    require_input(split_path(cfg, std::string(to_string(tag))));
  }
  const auto started = std::chrono::steady_clock::now();
  const auto built = build_set(cfg, /*force_embeddings=*/false);
  const auto built_at = std::chrono::steady_clock::now();
  const auto& rcfg = cfg.retrieval.retrieval;

  OutputGuard guard;
  ojson outputs = ojson::object();
  ojson split_seconds = ojson::object();
  for (auto tag : cfg.retrieval.splits) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string name(to_string(tag));
    const Corpus queries = read_corpus(split_path(cfg, name));
    const auto triples = build_triples(queries, built.set, rcfg, tag, cfg.workers);

    const auto tpath = triples_path(cfg, tag);
    write_triples(tpath, triples);
    guard.add(tpath);
    const auto epath = evidence_path(cfg, tag);
    {
      AtomicFile file(epath);
      for (const auto& t : triples) {
        file.stream() << evidence_dump_json(t, rcfg.strategy).dump() << '\n';
      }
      file.commit();
    }
    guard.add(epath);

    std::size_t evidence_total = 0;
    for (const auto& t : triples) evidence_total += t.evidences.size();
    outputs[name] = {{"triples", tpath.filename().string()},
                     {"evidence", epath.filename().string()},
                     {"records", triples.size()},
                     {"evidences", evidence_total}};
    split_seconds[name] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log << "retrieve: " << name << " records=" << triples.size()
        << " evidences=" << evidence_total << "\n";
  }

  const ojson meta = {
      {"config_digest", cfg.digest()},
      {"seed", cfg.seed},
      {"strategy", to_string(rcfg.strategy)},
      {"scorer", to_string(rcfg.scorer)},
      {"k", rcfg.k},
      {"tau", rcfg.tau ? ojson(*rcfg.tau) : ojson(nullptr)},
      {"prefetch_m", rcfg.prefetch_m},
      {"exact", rcfg.exact_mode},
      {"context_side", to_string(cfg.retrieval.context_side)},
      {"bm25", {{"k1", cfg.retrieval.bm25.k1}, {"b", cfg.retrieval.bm25.b}}},
      {"backend_id", built.backend ? built.backend->backend_id() : std::string()},
      {"cache_digest", built.set.cache_digest()},
      {"members", built.set.size()},
      {"outputs", outputs},
  };
  const auto meta_path = cfg.paths.output_dir / "run_meta.json";
  write_file_atomic(meta_path, meta.dump(2) + "\n");
  guard.add(meta_path);

  // Wall-clock numbers live apart from run_meta.json so that file stays
  // byte-reproducible.
  const ojson timing = {
      {"config_digest", cfg.digest()},
      {"build_seconds",
       std::chrono::duration<double>(built_at - started).count()},
      {"split_seconds", split_seconds},
      {"total_seconds",
       std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
           .count()},
  };
  write_file_atomic(cfg.paths.output_dir / "run_timing.json", timing.dump(2) + "\n");
  guard.dismiss();
}

void export_file(const std::filesystem::path& triples, FormatMode mode,
                 const std::filesystem::path& output) {
  const auto records = read_triples(triples);
  std::vector<FormattedExample> examples;
  examples.reserve(records.size());
  for (const auto& r : records) examples.push_back(format(r, mode));
  write_formatted(output, examples);
}

void cmd_export(const RunConfig& cfg, std::ostream& log) {
  require_dir(cfg.paths.output_dir, "output_dir");
  for (auto tag : cfg.retrieval.splits) require_input(triples_path(cfg, tag));
  OutputGuard guard;
  for (auto tag : cfg.retrieval.splits) {
    const auto out = formatted_path(cfg, cfg.format, tag);
    export_file(triples_path(cfg, tag), cfg.format, out);
    guard.add(out);
    log << "export: " << out.string() << "\n";
  }
  guard.dismiss();
}

std::vector<Hypothesis> read_hypotheses(const std::filesystem::path& path) {
  std::vector<Hypothesis> out;
  for_each_line(path, [&](std::string_view line, std::size_t lineno) {
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("id").get<std::string>(),
                     tokenize(j.at("hyp").get<std::string>())});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("hypotheses line " + std::to_string(lineno) + ": " + e.what());
    }
  });
  return out;
}

std::vector<Hypothesis> align_hypotheses(const std::vector<TripleRecord>& triples,
                                         const std::vector<Hypothesis>& hyps) {
  std::unordered_map<std::string, const Hypothesis*> by_id;
  for (const auto& h : hyps) {
    if (!by_id.emplace(h.id, &h).second) {
      throw MetricError("duplicate hypothesis for id '" + h.id + "'");
    }
  }
  std::vector<Hypothesis> aligned;
  aligned.reserve(triples.size());
  for (const auto& t : triples) {
    auto it = by_id.find(t.instance.id);
    if (it == by_id.end()) {
      throw MetricError("missing hypothesis for id '" + t.instance.id + "'");
    }
    aligned.push_back(*it->second);
    by_id.erase(it);
  }
  if (!by_id.empty()) {
    for (const auto& h : hyps) {
      if (by_id.count(h.id)) {
        throw MetricError("hypothesis for unknown id '" + h.id + "'");
      }
    }
  }
  return aligned;
}

namespace {

std::string inputs_digest(const EvaluateOptions& opts) {
  Sha256 h;
  h.update(sha256_file(opts.hyps));
  h.update(sha256_file(opts.triples));
  return h.hex_digest();
}

struct EvalInputs {
  std::vector<TripleRecord> triples;
  std::vector<Hypothesis> hyps;
};

EvalInputs load_eval_inputs(const EvaluateOptions& opts) {
  require_input(opts.hyps);
  require_input(opts.triples);
  EvalInputs in;
  in.triples = read_triples(opts.triples);
  in.hyps = align_hypotheses(in.triples, read_hypotheses(opts.hyps));
  return in;
}

ojson overlap_document(const OverlapReport& report, const EvaluateOptions& opts,
                       const std::string& digest) {
  (void)digest;
  return to_json(report, opts.metrics.bleu);
}

std::filesystem::path default_overlap_path(const EvaluateOptions& opts,
                                           OverlapMode mode) {
  if (opts.overlap_output) return *opts.overlap_output;
  auto p = opts.output;
  p.replace_filename(opts.output.stem().string() + ".overlap_" +
                     std::string(to_string(mode)) + ".json");
  return p;
}

}  // namespace

MetricReport cmd_evaluate(const EvaluateOptions& opts, std::ostream& log) {
  const auto in = load_eval_inputs(opts);
  std::vector<TokenSequence> hyps;
  std::vector<TokenSequence> refs;
  hyps.reserve(in.hyps.size());
  refs.reserve(in.triples.size());
  for (std::size_t i = 0; i < in.triples.size(); ++i) {
    hyps.push_back(in.hyps[i].tokens);
    refs.push_back(in.triples[i].instance.response.tokens);
  }
  const MetricReport report = evaluate(hyps, refs, opts.metrics.bleu);
  const std::string digest = inputs_digest(opts);
  auto doc = to_json(report, opts.metrics.bleu);
  doc["meta"]["inputs_digest"] = digest;

  OutputGuard guard;
  write_file_atomic(opts.output, doc.dump(2) + "\n");
  guard.add(opts.output);
  if (opts.overlap) {
    const auto overlap = overlap_report(in.triples, in.hyps, *opts.overlap,
                                        opts.metrics.counting, opts.metrics.bleu);
    write_file_atomic(default_overlap_path(opts, *opts.overlap),
                      overlap_document(overlap, opts, digest).dump(2) + "\n");
  }
  guard.dismiss();
  log << "evaluate: n=" << report.n_examples << " f1=" << report.f1
      << " bleu=" << report.bleu << "\n";
  return report;
}

OverlapReport cmd_analyze_overlap(const EvaluateOptions& opts, std::ostream& log) {
  const auto in = load_eval_inputs(opts);
  const OverlapMode mode = opts.overlap.value_or(OverlapMode::kMax);
  const auto report = overlap_report(in.triples, in.hyps, mode,
                                     opts.metrics.counting, opts.metrics.bleu);
  write_file_atomic(opts.output,
                    overlap_document(report, opts, inputs_digest(opts)).dump(2) + "\n");
  log << "analyze-overlap: mode=" << to_string(mode)
      << " bins=" << report.bins.size()
      << " mean_overlap_per_evidence=" << report.mean_overlap_per_evidence() << "\n";
  return report;
}

// ---------------------------------------------------------------------------

namespace {

struct Overrides {
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> k;
  std::optional<std::size_t> prefetch_m;
  std::optional<std::string> strategy;
  std::optional<std::string> scorer;
  std::optional<std::string> tau;
  std::optional<std::string> format;
  std::optional<std::string> output_dir;
  bool exact = false;
};

void add_override_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--workers", o.workers, "Worker threads");
  cmd->add_option("--seed", o.seed, "Override the configured seed");
  cmd->add_option("--k", o.k, "Evidence count");
  cmd->add_option("--prefetch-m", o.prefetch_m, "BM25 candidate pool size");
  cmd->add_option("--strategy", o.strategy, "c2c|c2r|mix|random");
  cmd->add_option("--scorer", o.scorer, "bm25|bertscore");
  cmd->add_option("--tau", o.tau, "Filter threshold, or 'none'");
  cmd->add_option("--format", o.format, "gpt|fid");
  cmd->add_option("--output-dir", o.output_dir, "Output directory");
  cmd->add_flag("--exact", o.exact, "Score every member (no pre-fetch)");
}

RunConfig load_with_overrides(const std::string& path, const Overrides& o) {
  require_input(path);
  std::string text = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  // Overrides are applied to the JSON form so validation sees the result.
  if (o.workers) j["workers"] = *o.workers;
  if (o.seed) j["seed"] = *o.seed;
  auto& r = j["retrieval"];
  if (r.is_null()) r = nlohmann::json::object();
  if (o.scorer) {
    r["scorer"] = *o.scorer;
    if (!o.tau && !r.contains("tau") && *o.scorer == "bm25") r["tau"] = nullptr;
  }
  if (o.k) r["k"] = *o.k;
  if (o.prefetch_m) r["prefetch_m"] = *o.prefetch_m;
  if (o.strategy) r["strategy"] = *o.strategy;
  if (o.tau) {
    if (*o.tau == "none") {
      r["tau"] = nullptr;
    } else {
      try {
        r["tau"] = std::stod(*o.tau);
      } catch (const std::exception&) {
        throw ConfigError("--tau expects a number or 'none'");
      }
    }
  }
  if (o.exact) r["exact"] = true;
  if (o.format) j["format"] = *o.format;
  if (o.output_dir) j["paths"]["output_dir"] = *o.output_dir;
  return RunConfig::from_json(j);
}

void print_error(std::ostream& err, const std::string& kind,
                 const std::string& message) {
  err << ojson{{"error", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Self-retrieval evidence pipeline for dialogue corpora", "selfret"};
  app.require_subcommand(1);

  IngestOptions ingest;
  std::string ingest_config;
  auto* c_ingest = app.add_subcommand("ingest", "Flatten raw dialogue data into a corpus");
  c_ingest->add_option("--input", ingest.input, "Raw JSONL")->required();
  c_ingest->add_option("--output", ingest.output, "Corpus JSONL")->required();
  c_ingest->add_option("--report", ingest.report, "Ingest report JSON");
  c_ingest->add_option("--source", ingest.source, "Source tag");
  c_ingest->add_option("--raw-format", ingest.raw_format, "chains|sessions");
  c_ingest->add_option("--max-turns", ingest.limits.max_turns);
  c_ingest->add_option("--max-tokens", ingest.limits.max_tokens_per_utterance);

  std::string config_path;
  Overrides overrides;
  auto config_cmd = [&](const char* name, const char* desc) {
    auto* cmd = app.add_subcommand(name, desc);
    cmd->add_option("--config", config_path, "Run configuration JSON")->required();
    add_override_flags(cmd, overrides);
    return cmd;
  };
  auto* c_split = config_cmd("split", "Seeded train/dev/test/extra split");
  auto* c_build = config_cmd("build-index", "Build retrieval indices and embedding cache");
  auto* c_retrieve = config_cmd("retrieve", "Retrieve evidence and write triples");

  std::optional<std::string> export_config;
  std::optional<std::string> export_triples;
  std::optional<std::string> export_output;
  std::string export_mode = "fid";
  auto* c_export = app.add_subcommand("export", "Write generation-ready inputs");
  c_export->add_option("--config", export_config, "Run configuration JSON");
  c_export->add_option("--triples", export_triples, "Single triple file");
  c_export->add_option("--output", export_output, "Output for --triples");
  c_export->add_option("--mode", export_mode, "gpt|fid (with --triples)");
  add_override_flags(c_export, overrides);

  EvaluateOptions eval;
  std::optional<std::string> eval_overlap;
  std::string counting = "set";
  auto eval_cmd = [&](const char* name, const char* desc) {
    auto* cmd = app.add_subcommand(name, desc);
    cmd->add_option("--hyps", eval.hyps, "Hypotheses JSONL {id, hyp}")->required();
    cmd->add_option("--triples", eval.triples, "Reference triples JSONL")->required();
    cmd->add_option("--output", eval.output, "Report JSON")->required();
    cmd->add_option("--counting", counting, "set|multiset overlap counting");
    cmd->add_option("--bleu-max-n", eval.metrics.bleu.max_n, "Highest BLEU n-gram order");
    return cmd;
  };
  auto* c_eval = eval_cmd("evaluate", "Score hypotheses against triples");
  c_eval->add_option("--overlap", eval_overlap, "Also write an overlap report: max|sum");
  c_eval->add_option("--overlap-output", eval.overlap_output,
                     "Overlap report path (default: next to --output)");
  auto* c_overlap = eval_cmd("analyze-overlap", "Metrics binned by evidence overlap");
  c_overlap->add_option("--mode", eval_overlap, "max|sum");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (c_ingest->parsed()) {
      const auto report = cmd_ingest(ingest, err);
      out << to_json(report).dump() << "\n";
    } else if (c_split->parsed()) {
      cmd_split(load_with_overrides(config_path, overrides), err);
    } else if (c_build->parsed()) {
      cmd_build_index(load_with_overrides(config_path, overrides), err);
    } else if (c_retrieve->parsed()) {
      cmd_retrieve(load_with_overrides(config_path, overrides), err);
    } else if (c_export->parsed()) {
      if (export_triples) {
        if (!export_output) throw ConfigError("export: --triples needs --output");
        require_input(*export_triples);
        export_file(*export_triples, parse_format_mode(export_mode), *export_output);
      } else if (export_config) {
        cmd_export(load_with_overrides(*export_config, overrides), err);
      } else {
        throw ConfigError("export: pass --config or --triples");
      }
    } else if (c_eval->parsed() || c_overlap->parsed()) {
      if (counting == "multiset") {
        eval.metrics.counting = OverlapCounting::kMultiset;
      } else if (counting != "set") {
        throw ConfigError("--counting must be set or multiset");
      }
      if (eval_overlap) eval.overlap = parse_overlap_mode(*eval_overlap);
      if (c_eval->parsed()) {
        const auto report = cmd_evaluate(eval, err);
        out << to_json(report, eval.metrics.bleu).dump() << "\n";
      } else {
        cmd_analyze_overlap(eval, err);
      }
    }
  } catch (const Error& e) {
    print_error(err, error_kind_name(e.kind()), e.what());
    return e.kind() == ErrorKind::kInputMissing ? kExitInputMissing : kExitFailure;
  } catch (const std::exception& e) {
    print_error(err, "internal error", e.what());
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace selfret::cli
