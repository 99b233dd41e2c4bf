#pragma once

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lowres/bench.hpp"
#include "lowres/corpus.hpp"
#include "lowres/datasets.hpp"
#include "lowres/error.hpp"
#include "lowres/jsonl.hpp"
#include "lowres/tokenizer.hpp"
#include "lowres/translate.hpp"

namespace lowres::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

inline constexpr const char* kBackendEnv = "LOWRES_BACKEND_URL";
inline constexpr const char* kBuiltinBase = "builtin:byte-fallback";

struct MixtureSourceConfig {
  std::string tag;
  std::string path;
  double weight = 0.0;
};

// Everything a run can be configured with. Loaded from one JSON file, then
// overridden field by field from flags.
struct PipelineConfig {
  std::string backend = "mock:identity";
  std::string counter_model;  // empty: byte-fallback base
  std::size_t max_chunk_tokens = 256;
  std::vector<std::size_t> bucket_bounds = {32, 64, 128, 256};
  std::size_t max_batch_items = 16;
  std::size_t max_retries = 3;
  std::int64_t retry_base_ms = 1000;
  std::string source_lang = "eng";
  std::string target_lang = "amh";
  std::string journal;
  std::vector<MixtureSourceConfig> mixture_sources;
  std::uint64_t total_token_budget = 0;
  std::string directive{datasets::kDefaultDirective};
  std::string translation_task{datasets::kDefaultTranslationTask};
  std::string prompt{bench::kDefaultPromptTemplate};
  std::string labels = "ABCD";
  std::set<std::string> stem_subjects = bench::default_stem_subjects();
  std::uint64_t seed = 0;
  std::size_t parallelism = 1;

  json to_json() const {
    json sources = json::array();
    for (const auto& s : mixture_sources) sources.push_back({{"tag", s.tag}, {"path", s.path}, {"weight", s.weight}});
    return json{{"backend", backend},
                {"counter_model", counter_model},
                {"max_chunk_tokens", max_chunk_tokens},
                {"bucket_bounds", bucket_bounds},
                {"max_batch_items", max_batch_items},
                {"max_retries", max_retries},
                {"retry_base_ms", retry_base_ms},
                {"source_lang", source_lang},
                {"target_lang", target_lang},
                {"journal", journal},
                {"mixture", {{"sources", std::move(sources)}, {"total_token_budget", total_token_budget}}},
                {"templates",
                 {{"directive", directive}, {"translation_task", translation_task}, {"prompt", prompt}, {"labels", labels}}},
                {"stem_subjects", stem_subjects},
                {"seed", seed},
                {"parallelism", parallelism}};
  }

  static PipelineConfig from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    PipelineConfig c;
    auto take = [](const json& obj, const std::string& key, const std::string& path, auto& dst) {
      if (!obj.contains(key)) return;
      try {
        dst = obj.at(key).get<std::decay_t<decltype(dst)>>();
      } catch (const json::exception& e) {
        throw ConfigError("config field " + path + ": " + e.what());
      }
    };
    static const std::set<std::string> kKnown = {
        "backend",    "counter_model", "max_chunk_tokens", "bucket_bounds", "max_batch_items", "max_retries",
        "retry_base_ms", "source_lang", "target_lang",     "journal",       "mixture",         "templates",
        "stem_subjects", "seed",        "parallelism"};
    for (const auto& [k, _] : j.items()) {
      if (!kKnown.contains(k)) throw ConfigError("config field " + k + ": unknown field");
    }
    take(j, "backend", "backend", c.backend);
    take(j, "counter_model", "counter_model", c.counter_model);
    take(j, "max_chunk_tokens", "max_chunk_tokens", c.max_chunk_tokens);
    take(j, "bucket_bounds", "bucket_bounds", c.bucket_bounds);
    take(j, "max_batch_items", "max_batch_items", c.max_batch_items);
    take(j, "max_retries", "max_retries", c.max_retries);
    take(j, "retry_base_ms", "retry_base_ms", c.retry_base_ms);
    take(j, "source_lang", "source_lang", c.source_lang);
    take(j, "target_lang", "target_lang", c.target_lang);
    take(j, "journal", "journal", c.journal);
    take(j, "stem_subjects", "stem_subjects", c.stem_subjects);
    take(j, "seed", "seed", c.seed);
    take(j, "parallelism", "parallelism", c.parallelism);
    if (j.contains("mixture")) {
      const auto& m = j["mixture"];
      if (!m.is_object()) throw ConfigError("config field mixture: must be an object");
      take(m, "total_token_budget", "mixture.total_token_budget", c.total_token_budget);
      if (m.contains("sources")) {
        if (!m["sources"].is_array()) throw ConfigError("config field mixture.sources: must be an array");
        for (std::size_t i = 0; i < m["sources"].size(); ++i) {
          const auto& s = m["sources"][i];
          const std::string where = "mixture.sources[" + std::to_string(i) + "]";
          MixtureSourceConfig sc;
          take(s, "tag", where + ".tag", sc.tag);
          take(s, "path", where + ".path", sc.path);
          take(s, "weight", where + ".weight", sc.weight);
          if (sc.tag.empty()) throw ConfigError("config field " + where + ".tag: required");
          if (sc.path.empty()) throw ConfigError("config field " + where + ".path: required");
          c.mixture_sources.push_back(sc);
        }
      }
    }
    if (j.contains("templates")) {
      const auto& t = j["templates"];
      if (!t.is_object()) throw ConfigError("config field templates: must be an object");
      take(t, "directive", "templates.directive", c.directive);
      take(t, "translation_task", "templates.translation_task", c.translation_task);
      take(t, "prompt", "templates.prompt", c.prompt);
      take(t, "labels", "templates.labels", c.labels);
    }
    return c;
  }

  // Structural checks and existence of every referenced input path.
  void validate() const {
    auto field = [](const std::string& name, const std::string& why) { return ConfigError("config field " + name + ": " + why); };
    if (parallelism < 1) throw field("parallelism", "must be at least 1");
    if (max_chunk_tokens < 1) throw field("max_chunk_tokens", "must be at least 1");
    if (max_batch_items < 1) throw field("max_batch_items", "must be at least 1");
    if (retry_base_ms < 0) throw field("retry_base_ms", "must be nonnegative");
    if (bucket_bounds.empty()) throw field("bucket_bounds", "must be nonempty");
    for (std::size_t i = 1; i < bucket_bounds.size(); ++i) {
      if (bucket_bounds[i] <= bucket_bounds[i - 1]) throw field("bucket_bounds", "must be strictly ascending");
    }
    if (source_lang.empty()) throw field("source_lang", "must be nonempty");
    if (target_lang.empty()) throw field("target_lang", "must be nonempty");
    if (!counter_model.empty() && !fs::exists(counter_model)) throw field("counter_model", "no such file " + counter_model);
    for (std::size_t i = 0; i < mixture_sources.size(); ++i) {
      if (!fs::exists(mixture_sources[i].path)) {
        throw field("mixture.sources[" + std::to_string(i) + "].path", "no such file " + mixture_sources[i].path);
      }
    }
    try {
      (void)datasets::SftTemplates::load(directive, translation_task);
    } catch (const ConfigError& e) {
      throw field("templates", e.what());
    }
    try {
      (void)bench::PromptTemplate(prompt, labels);
    } catch (const ConfigError& e) {
      throw field("templates.prompt", e.what());
    }
    try {
      (void)translate::make_backend(backend);
    } catch (const ConfigError& e) {
      throw field("backend", e.what());
    }
  }
};

namespace detail {

struct Flags {
  // global
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool dry_run = false;
  // shared
  std::string input, output, format = "jsonl", model, base, ext, corpus, compare, text, ids;
  std::optional<std::string> backend;
  std::optional<std::size_t> parallelism, max_chunk_tokens, max_batch_items, max_retries;
  std::optional<std::int64_t> retry_base_ms;
  std::optional<std::string> bucket_bounds, source_lang, target_lang, journal, counter_model;
  bool fresh = false;
  bool nfc = false;
  std::string policy = "skip";
  std::string gaps_out;
  std::string source_tag;
  std::size_t target_size = 19008;
  std::uint64_t min_pair_freq = 2;
  bool no_ascii_filter = false;
  // dataset
  std::string source_pairs, target_pairs, side = "both", direction = "both", manifest, rejected;
  std::optional<std::uint64_t> budget;
  std::vector<std::string> mixture_sources;
  int max_rank = 0;
  bool as_pairs = false;
  std::string lang = "eng";
  // bench
  std::string items, responses, csv;
  std::vector<std::string> reports;
  std::vector<std::string> labels;
};

// Collects writes so --dry-run can skip them.
class Output {
 public:
  explicit Output(bool dry_run) : dry_run_(dry_run) {}

  void write(const fs::path& path, const std::string& data) {
    planned_.push_back(path.string());
    if (!dry_run_) jsonl::write_file(path, data);
  }

  // Records an output that a dry run would have produced.
  void plan(const fs::path& path) {
    if (!path.empty()) planned_.push_back(path.string());
  }

  bool dry_run() const { return dry_run_; }
  const std::vector<std::string>& planned() const { return planned_; }

 private:
  bool dry_run_;
  std::vector<std::string> planned_;
};

inline std::vector<std::size_t> parse_bounds(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--bucket-bounds: bad value '" + item + "'");
    }
  }
  return out;
}

inline void require_input(const std::string& path, const std::string& flag) {
  if (path.empty()) throw ConfigError(flag + " is required");
  if (!fs::exists(path)) throw ConfigError(flag + ": no such file " + path);
}

inline void require_output(const std::string& path, const std::string& flag) {
  if (path.empty()) throw ConfigError(flag + " is required");
}

inline corpus::Format parse_format(const std::string& f) {
  if (f == "jsonl") return corpus::Format::kJsonl;
  if (f == "txt-dir") return corpus::Format::kTxtDir;
  throw ConfigError("--format must be jsonl or txt-dir");
}

inline tokenizer::TokenizerModel load_base(const std::string& spec) {
  if (spec == kBuiltinBase) return tokenizer::TokenizerModel();
  return tokenizer::load_model(spec);
}

class Runner {
 public:
  Runner(Flags flags, PipelineConfig cfg, std::ostream& out)
      : f_(std::move(flags)), cfg_(std::move(cfg)), out_(out), io_(f_.dry_run) {}

  const PipelineConfig& config() const { return cfg_; }

  json pipeline_echo() const { return cfg_.to_json(); }

  const tokenizer::TokenizerModel& counter() {
    if (!counter_) {
      counter_ = cfg_.counter_model.empty() ? tokenizer::TokenizerModel() : tokenizer::load_model(cfg_.counter_model);
    }
    return *counter_;
  }

  translate::PipelineOptions pipeline_options() {
    translate::PipelineOptions o;
    o.counter = &counter();
    o.max_chunk_tokens = cfg_.max_chunk_tokens;
    o.bucket_bounds = cfg_.bucket_bounds;
    o.max_batch_items = cfg_.max_batch_items;
    o.run.source_lang = cfg_.source_lang;
    o.run.target_lang = cfg_.target_lang;
    o.run.parallelism = cfg_.parallelism;
    o.run.seed = cfg_.seed;
    o.run.retry.max_retries = cfg_.max_retries;
    o.run.retry.base_delay = std::chrono::milliseconds(cfg_.retry_base_ms);
    if (!cfg_.journal.empty()) o.run.journal = cfg_.journal;
    o.run.fresh = f_.fresh;
    return o;
  }

  std::unique_ptr<translate::TranslationBackend> backend() { return translate::make_backend(cfg_.backend); }

  json tokenizer_train() {
    require_input(f_.corpus, "--corpus");
    require_output(f_.output, "--out");
    const auto docs = corpus::ingest_documents(f_.corpus, parse_format(f_.format));
    if (docs.empty()) throw Error("corpus is empty: " + f_.corpus);
    if (f_.target_size == 0) throw ConfigError("--target-size must be at least 1");
    json s{{"documents", docs.size()}, {"target_size", f_.target_size}};
    if (io_.dry_run()) {
      io_.plan(f_.output);
      return s;
    }
    tokenizer::TrainOptions opts{f_.target_size, f_.min_pair_freq, !f_.no_ascii_filter};
    const auto ext = tokenizer::train_extension(std::span<const Document>(docs), opts);
    io_.write(f_.output, tokenizer::extension_to_json(ext).dump(1, ' ', false) + "\n");
    s["pieces"] = ext.pieces.size();
    return s;
  }

  json tokenizer_merge() {
    if (f_.base != kBuiltinBase) require_input(f_.base, "--base");
    require_input(f_.ext, "--ext");
    require_output(f_.output, "--out");
    const auto base = load_base(f_.base);
    const auto ext = tokenizer::load_extension(f_.ext);
    const auto merged = tokenizer::merge(base.vocab(), ext);
    io_.write(f_.output, tokenizer::model_to_json(merged).dump(1, ' ', false) + "\n");
    return json{{"base_size", base.size()},
                {"extension_pieces", ext.pieces.size()},
                {"size", merged.size()},
                {"dropped_collisions", base.size() + ext.pieces.size() - merged.size()}};
  }

  json tokenizer_encode() {
    const auto model = load_base(f_.model.empty() ? std::string(kBuiltinBase) : f_.model);
    std::string lines;
    std::size_t texts = 0, tokens = 0;
    auto emit = [&](std::string_view text) {
      const auto ids = model.encode(text);
      lines += json(ids).dump() + "\n";
      ++texts;
      tokens += ids.size();
    };
    if (!f_.input.empty()) {
      require_input(f_.input, "--input");
      for (const auto& d : corpus::ingest_documents(f_.input, parse_format(f_.format))) emit(d.text);
    } else {
      emit(f_.text);
    }
    write_or_print(lines);
    return json{{"texts", texts}, {"tokens", tokens}};
  }

  json tokenizer_decode() {
    const auto model = load_base(f_.model.empty() ? std::string(kBuiltinBase) : f_.model);
    std::vector<std::vector<tokenizer::TokenId>> streams;
    if (!f_.input.empty()) {
      require_input(f_.input, "--input");
      jsonl::for_each_line(f_.input, [&](const json& j, std::size_t line_no) {
        try {
          streams.push_back(j.get<std::vector<tokenizer::TokenId>>());
        } catch (const json::exception&) {
          throw ParseError("line " + std::to_string(line_no) + ": expected an array of token ids");
        }
      });
    } else {
      streams.push_back({});
      std::stringstream ss(f_.ids);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
          streams.back().push_back(static_cast<tokenizer::TokenId>(std::stoul(item)));
        } catch (const std::exception&) {
          throw ConfigError("--ids: bad token id '" + item + "'");
        }
      }
    }
    std::string lines;
    for (const auto& ids : streams) lines += json(model.decode(ids)).dump(-1, ' ', false) + "\n";
    write_or_print(lines);
    return json{{"streams", streams.size()}};
  }

  json tokenizer_stats() {
    const auto model = load_base(f_.model.empty() ? std::string(kBuiltinBase) : f_.model);
    json s{{"size", model.size()}, {"base_size", model.base_size()}, {"added", model.size() - model.base_size()}};
    if (!f_.corpus.empty()) {
      require_input(f_.corpus, "--corpus");
      const auto docs = corpus::ingest_documents(f_.corpus, parse_format(f_.format));
      const auto other = load_base(f_.compare.empty() ? std::string(kBuiltinBase) : f_.compare);
      s["compression"] = tokenizer::compression_to_json(tokenizer::compression_report(other, model, docs));
    }
    return s;
  }

  json corpus_ingest() {
    require_input(f_.input, "--input");
    require_output(f_.output, "--out");
    const auto docs = corpus::ingest_documents(f_.input, parse_format(f_.format), corpus::IngestOptions{f_.nfc});
    io_.write(f_.output, corpus::documents_to_jsonl(docs));
    return json{{"documents", docs.size()}};
  }

  json corpus_stats() {
    require_input(f_.input, "--input");
    const auto docs = corpus::ingest_documents(f_.input, parse_format(f_.format));
    std::optional<tokenizer::TokenizerModel> model;
    if (!f_.model.empty()) model = load_base(f_.model);
    corpus::ScriptStats total;
    std::uint64_t tokens = 0;
    std::string lines;
    for (const auto& d : docs) {
      const auto st = corpus::script_stats(d.text);
      total += st;
      json row{{"id", d.id}, {"source", d.source.str()}, {"stats", corpus::stats_to_json(st)}};
      if (model) {
        const auto n = corpus::count_tokens(d, *model);
        tokens += n;
        row["tokens"] = n;
      }
      lines += jsonl::dump(row) + "\n";
    }
    if (!f_.output.empty()) io_.write(f_.output, lines);
    json s{{"documents", docs.size()}, {"stats", corpus::stats_to_json(total)}};
    if (model) s["tokens"] = tokens;
    return s;
  }

  json corpus_dedup() {
    require_input(f_.input, "--input");
    require_output(f_.output, "--out");
    const auto docs = corpus::ingest_documents(f_.input, parse_format(f_.format));
    const auto kept = corpus::dedup_exact(docs);
    io_.write(f_.output, corpus::documents_to_jsonl(kept));
    return json{{"documents", docs.size()}, {"kept", kept.size()}, {"removed", docs.size() - kept.size()}};
  }

  json translate_corpus() {
    require_input(f_.input, "--input");
    require_output(f_.output, "--out");
    const auto docs = corpus::ingest_documents(f_.input, parse_format(f_.format));
    std::vector<translate::SourceText> sources;
    for (const auto& d : docs) sources.push_back({d.id, d.text});
    auto opts = pipeline_options();
    const auto policy = f_.policy == "placeholder" ? translate::FailurePolicy::kPlaceholder : translate::FailurePolicy::kSkip;
    if (f_.policy != "skip" && f_.policy != "placeholder") throw ConfigError("--policy must be skip or placeholder");
    if (io_.dry_run()) {
      io_.plan(f_.output);
      io_.plan(f_.gaps_out);
      const auto plan = translate::plan_documents(sources, opts.max_chunk_tokens, counter());
      const auto batches = translate::schedule_batches(plan, opts.bucket_bounds, opts.max_batch_items);
      return json{{"plan", translate::plan_summary(plan, batches)}};
    }
    auto be = backend();
    const auto r = translate::translate_documents(sources, *be, opts, policy);
    std::vector<Document> out_docs;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      Document d = docs[i];
      d.text = r.restored.documents[i].text;
      if (!f_.source_tag.empty()) d.source = SourceTag::parse(f_.source_tag);
      out_docs.push_back(std::move(d));
    }
    io_.write(f_.output, corpus::documents_to_jsonl(out_docs));
    json report{{"plan", translate::plan_summary(r.plan, r.batches)},
                {"gaps", translate::gaps_to_json(r.restored.gaps)},
                {"backend_calls", r.run.stats.backend_calls},
                {"failed_batches", r.run.stats.failed_batches},
                {"resumed_batches", r.run.stats.resumed_batches},
                {"config", pipeline_echo()}};
    if (!f_.gaps_out.empty()) io_.write(f_.gaps_out, report.dump(1, ' ', false) + "\n");
    return json{{"documents", docs.size()},
                {"chunks", r.plan.chunks.size()},
                {"batches", r.batches.size()},
                {"excluded", r.plan.excluded.size()},
                {"gaps", r.restored.gaps.size()},
                {"failed_batches", r.run.stats.failed_batches},
                {"resumed_batches", r.run.stats.resumed_batches}};
  }

  json dataset_mixture() {
    require_output(f_.output, "--out");
    datasets::MixtureConfig mc;
    mc.seed = cfg_.seed;
    mc.total_token_budget = cfg_.total_token_budget;
    mc.counter = &counter();
    for (const auto& s : cfg_.mixture_sources) {
      mc.sources.push_back({SourceTag::parse(s.tag), s.path, s.weight});
    }
    try {
      mc.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("config field mixture: ") + e.what());
    }
    auto result = datasets::build_pretrain_mixture(mc);
    auto manifest = datasets::manifest_to_json(result.manifest);
    manifest["config"] = pipeline_echo();
    io_.write(f_.output, corpus::documents_to_jsonl(result.emitted));
    if (!f_.manifest.empty()) io_.write(f_.manifest, manifest.dump(1, ' ', false) + "\n");
    return json{{"documents", result.emitted.size()}, {"total_tokens", result.manifest.total_tokens}};
  }

  json dataset_sft_translate() {
    require_input(f_.input, "--input");
    require_output(f_.output, "--out");
    const auto pairs = datasets::read_pairs(f_.input);
    if (io_.dry_run()) {
      io_.plan(f_.output);
      io_.plan(f_.rejected);
      return json{{"pairs", pairs.size()}};
    }
    auto be = backend();
    const auto results = datasets::translate_instruction_pairs(pairs, *be, pipeline_options());
    std::vector<datasets::InstructionPair> ok;
    json rejected = json::array();
    for (std::size_t i = 0; i < results.size(); ++i) {
      if (results[i]) {
        ok.push_back(*results[i].value);
      } else {
        rejected.push_back({{"index", i}, {"id", pairs[i].id}, {"reason", results[i].reason}});
      }
    }
    io_.write(f_.output, pairs_jsonl(ok));
    if (!f_.rejected.empty()) io_.write(f_.rejected, jsonl::to_string(rejected));
    return json{{"pairs", pairs.size()}, {"translated", ok.size()}, {"rejected", rejected.size()}};
  }

  json dataset_sft_mixed() {
    const auto [src, tgt] = load_parallel_pairs();
    const auto templates = datasets::SftTemplates::load(cfg_.directive, cfg_.translation_task);
    std::vector<datasets::Side> sides;
    if (f_.side == "human" || f_.side == "both") sides.push_back(datasets::Side::kHuman);
    if (f_.side == "ai" || f_.side == "both") sides.push_back(datasets::Side::kAi);
    if (sides.empty()) throw ConfigError("--side must be human, ai or both");
    std::vector<datasets::InstructionPair> out;
    for (std::size_t i = 0; i < src.size(); ++i) {
      for (const auto side : sides) out.push_back(datasets::mixed_language_variant(src[i], tgt[i], side, templates));
    }
    io_.write(f_.output, pairs_jsonl(out));
    return json{{"pairs", out.size()}};
  }

  json dataset_sft_transtask() {
    const auto [src, tgt] = load_parallel_pairs();
    const auto templates = datasets::SftTemplates::load(cfg_.directive, cfg_.translation_task);
    std::vector<datasets::TaskSide> sides;
    if (f_.side == "instruction" || f_.side == "both") sides.push_back(datasets::TaskSide::kInstruction);
    if (f_.side == "output" || f_.side == "both") sides.push_back(datasets::TaskSide::kOutput);
    if (sides.empty()) throw ConfigError("--side must be instruction, output or both");
    std::vector<datasets::Direction> dirs;
    if (f_.direction == "forward" || f_.direction == "both") dirs.push_back(datasets::Direction::kSourceToTarget);
    if (f_.direction == "backward" || f_.direction == "both") dirs.push_back(datasets::Direction::kTargetToSource);
    if (dirs.empty()) throw ConfigError("--direction must be forward, backward or both");
    std::vector<datasets::InstructionPair> out;
    for (std::size_t i = 0; i < src.size(); ++i) {
      for (const auto side : sides) {
        for (const auto dir : dirs) out.push_back(datasets::translation_task_pair(src[i], tgt[i], side, dir, templates));
      }
    }
    io_.write(f_.output, pairs_jsonl(out));
    return json{{"pairs", out.size()}};
  }

  json dataset_oa_prune() {
    require_input(f_.input, "--input");
    require_output(f_.output, "--out");
    const auto trees = datasets::read_trees(f_.input);
    std::vector<datasets::Thread> threads;
    for (const auto& t : trees) {
      for (auto& th : datasets::prune_oa_tree(t, datasets::PrunePolicy{f_.max_rank})) threads.push_back(std::move(th));
    }
    if (f_.as_pairs) {
      std::vector<datasets::InstructionPair> pairs;
      for (std::size_t i = 0; i < threads.size(); ++i) {
        pairs.push_back(datasets::thread_to_pair(threads[i], f_.lang, "oa-" + std::to_string(i)));
      }
      io_.write(f_.output, pairs_jsonl(pairs));
    } else {
      std::string lines;
      for (const auto& th : threads) lines += jsonl::dump(datasets::thread_to_json(th)) + "\n";
      io_.write(f_.output, lines);
    }
    return json{{"trees", trees.size()}, {"threads", threads.size()}};
  }

  json dataset_visual_translate() {
    require_input(f_.input, "--input");
    require_output(f_.output, "--out");
    const auto records = datasets::read_visual_records(f_.input);
    for (const auto& r : records) r.validate();
    if (io_.dry_run()) {
      io_.plan(f_.output);
      io_.plan(f_.rejected);
      return json{{"records", records.size()}};
    }
    auto be = backend();
    const auto results = datasets::translate_visual_records(records, *be, pipeline_options());
    std::string lines;
    json rejected = json::array();
    std::size_t ok = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
      if (results[i]) {
        lines += jsonl::dump(datasets::visual_to_json(*results[i].value)) + "\n";
        ++ok;
      } else {
        rejected.push_back({{"index", i}, {"id", records[i].id}, {"reason", results[i].reason}});
      }
    }
    io_.write(f_.output, lines);
    if (!f_.rejected.empty()) io_.write(f_.rejected, jsonl::to_string(rejected));
    return json{{"records", records.size()}, {"translated", ok}, {"rejected", rejected.size()}};
  }

  json bench_build() {
    require_input(f_.items, "--items");
    require_output(f_.output, "--out");
    const auto items = bench::read_items(f_.items);
    if (io_.dry_run()) {
      io_.plan(f_.output);
      return json{{"items", items.size()}};
    }
    auto be = backend();
    const auto tb = bench::build_translated_benchmark(items, *be, pipeline_options());
    std::string lines;
    for (const auto& it : tb.items) lines += jsonl::dump(bench::item_to_json(it)) + "\n";
    io_.write(f_.output, lines);
    return json{{"items", items.size()}, {"translated", tb.items.size()}, {"dropped", tb.dropped.size()}};
  }

  json bench_score() {
    require_input(f_.items, "--items");
    require_input(f_.responses, "--responses");
    const auto items = bench::read_items(f_.items);
    std::vector<std::pair<std::size_t, std::string>> raw;
    jsonl::for_each_line(f_.responses, [&](const json& j, std::size_t line_no) {
      try {
        const auto& id = j.at("item_id");
        const std::size_t idx = id.is_string() ? std::stoull(id.get<std::string>()) : id.get<std::size_t>();
        raw.emplace_back(idx, j.at("response").get<std::string>());
      } catch (const std::exception& e) {
        throw ParseError("responses line " + std::to_string(line_no) + ": " + e.what());
      }
    });
    if (raw.size() != items.size()) {
      throw Error("item/response count mismatch: " + std::to_string(items.size()) + " items, " +
                  std::to_string(raw.size()) + " responses");
    }
    std::vector<std::string> responses(items.size());
    std::vector<bool> seen(items.size(), false);
    for (auto& [idx, text] : raw) {
      if (idx >= items.size() || seen[idx]) {
        throw Error("responses: item_id " + std::to_string(idx) + " is out of range or repeated");
      }
      seen[idx] = true;
      responses[idx] = std::move(text);
    }
    const bench::PromptTemplate tmpl(cfg_.prompt, cfg_.labels);
    const auto scored = bench::score(items, responses, tmpl.labels());
    std::map<std::string, std::string> labels;
    for (const auto& kv : f_.labels) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--label expects key=value, got " + kv);
      labels[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    const auto report = bench::aggregate(scored.fragments, cfg_.stem_subjects, labels);
    auto rj = bench::report_to_json(report);
    rj["config"] = pipeline_echo();
    if (!f_.output.empty()) io_.write(f_.output, rj.dump(1, ' ', false) + "\n");
    if (!f_.csv.empty()) io_.write(f_.csv, bench::subject_csv(report));
    json s{{"items", items.size()},
           {"overall_micro", report.overall_micro},
           {"overall_macro", report.overall_macro},
           {"non_stem_micro", rj["non_stem_micro"]}};
    return s;
  }

  json bench_report() {
    if (f_.reports.empty()) throw ConfigError("--reports needs at least one report file");
    std::vector<bench::EvalReport> reports;
    for (const auto& p : f_.reports) {
      require_input(p, "--reports");
      try {
        reports.push_back(bench::report_from_json(json::parse(jsonl::read_file(p))));
      } catch (const json::exception& e) {
        throw ParseError(p + ": " + e.what());
      }
    }
    const auto table = bench::render_score_table(reports);
    if (!f_.csv.empty()) {
      if (reports.size() == 2) {
        io_.write(f_.csv, bench::subject_csv(reports[0], reports[1]));
      } else {
        io_.write(f_.csv, bench::subject_csv(reports[0]));
      }
    }
    if (!f_.output.empty()) {
      io_.write(f_.output, table);
    } else {
      out_ << table;
    }
    return json{{"reports", reports.size()}};
  }

  const Output& io() const { return io_; }

 private:
  std::string pairs_jsonl(const std::vector<datasets::InstructionPair>& pairs) {
    std::string lines;
    for (const auto& p : pairs) lines += jsonl::dump(datasets::pair_to_json(p)) + "\n";
    return lines;
  }

  std::pair<std::vector<datasets::InstructionPair>, std::vector<datasets::InstructionPair>> load_parallel_pairs() {
    require_input(f_.source_pairs, "--source");
    require_input(f_.target_pairs, "--target");
    require_output(f_.output, "--out");
    auto src = datasets::read_pairs(f_.source_pairs);
    auto tgt = datasets::read_pairs(f_.target_pairs);
    if (src.size() != tgt.size()) {
      throw Error("parallel pair files differ in length: " + std::to_string(src.size()) + " vs " +
                  std::to_string(tgt.size()));
    }
    return {std::move(src), std::move(tgt)};
  }

  void write_or_print(const std::string& lines) {
    if (!f_.output.empty()) {
      io_.write(f_.output, lines);
    } else {
      out_ << lines;
    }
  }

  Flags f_;
  PipelineConfig cfg_;
  std::ostream& out_;
  Output io_;
  std::optional<tokenizer::TokenizerModel> counter_;
};

}  // namespace detail

// Entry point. args excludes the program name. Exit codes: 0 success, 1 runtime
// error, 2 usage or configuration error. Every successful run prints one JSON
// summary line on `out`.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  detail::Flags f;
  CLI::App app{"Corpus tooling for adapting language models to low-resource languages", "lowres"};
  app.require_subcommand(1, 1);
  app.add_option("--config", f.config_path, "JSON pipeline config");
  app.add_option("--seed", f.seed, "Seed for every random choice");
  app.add_flag("--dry-run", f.dry_run, "Validate everything, write nothing, call no backend");

  std::string command;
  std::map<std::string, std::function<json(detail::Runner&)>> actions;
  auto leaf = [&](CLI::App* group, const std::string& name, const std::string& desc,
                  std::function<json(detail::Runner&)> action) {
    auto* sub = group->add_subcommand(name, desc);
    const std::string full = group->get_name() + " " + name;
    sub->callback([&command, full] { command = full; });
    actions[full] = std::move(action);
    return sub;
  };
  auto translate_flags = [&](CLI::App* sub) {
    sub->add_option("--backend", f.backend, "Backend spec: URL or mock:identity|mock:tag|mock:flaky:<n>");
    sub->add_option("--parallelism", f.parallelism, "Concurrent backend calls");
    sub->add_option("--max-chunk-tokens", f.max_chunk_tokens);
    sub->add_option("--bucket-bounds", f.bucket_bounds, "Comma-separated ascending token bounds");
    sub->add_option("--max-batch-items", f.max_batch_items);
    sub->add_option("--max-retries", f.max_retries);
    sub->add_option("--retry-base-ms", f.retry_base_ms);
    sub->add_option("--source-lang", f.source_lang);
    sub->add_option("--target-lang", f.target_lang);
    sub->add_option("--journal", f.journal, "Resumable journal path");
    sub->add_option("--counter", f.counter_model, "Vocabulary file used to count chunk tokens");
    sub->add_flag("--fresh", f.fresh, "Ignore an existing journal");
  };

  auto* tok = app.add_subcommand("tokenizer", "Train, merge and apply subword vocabularies");
  tok->require_subcommand(1, 1);
  {
    auto* s = leaf(tok, "train", "Learn an extension vocabulary", [](auto& r) { return r.tokenizer_train(); });
    s->add_option("--corpus", f.corpus)->required();
    s->add_option("--format", f.format);
    s->add_option("--out", f.output)->required();
    s->add_option("--target-size", f.target_size);
    s->add_option("--min-pair-freq", f.min_pair_freq);
    s->add_flag("--no-ascii-filter", f.no_ascii_filter, "Also learn pure-ASCII pieces (for base vocabularies)");
    s = leaf(tok, "merge", "Append an extension to a base vocabulary", [](auto& r) { return r.tokenizer_merge(); });
    s->add_option("--base", f.base, std::string("Base vocabulary file or ") + kBuiltinBase)->required();
    s->add_option("--ext", f.ext)->required();
    s->add_option("--out", f.output)->required();
    s = leaf(tok, "encode", "Encode text to token ids", [](auto& r) { return r.tokenizer_encode(); });
    s->add_option("--model", f.model);
    s->add_option("--text", f.text);
    s->add_option("--input", f.input, "Corpus to encode, one id array per document");
    s->add_option("--format", f.format);
    s->add_option("--out", f.output);
    s = leaf(tok, "decode", "Decode token ids to text", [](auto& r) { return r.tokenizer_decode(); });
    s->add_option("--model", f.model);
    s->add_option("--ids", f.ids, "Comma-separated ids");
    s->add_option("--input", f.input, "JSONL of id arrays");
    s->add_option("--out", f.output);
    s = leaf(tok, "stats", "Vocabulary sizes and compression", [](auto& r) { return r.tokenizer_stats(); });
    s->add_option("--model", f.model);
    s->add_option("--compare", f.compare, "Reference model (default byte fallback)");
    s->add_option("--corpus", f.corpus);
    s->add_option("--format", f.format);
  }

  auto* cor = app.add_subcommand("corpus", "Ingest and characterize corpora");
  cor->require_subcommand(1, 1);
  {
    auto* s = leaf(cor, "ingest", "Normalize input into corpus JSONL", [](auto& r) { return r.corpus_ingest(); });
    s->add_option("--input", f.input)->required();
    s->add_option("--format", f.format);
    s->add_option("--out", f.output)->required();
    s->add_flag("--nfc", f.nfc, "NFC-normalize text");
    s = leaf(cor, "stats", "Script and token statistics", [](auto& r) { return r.corpus_stats(); });
    s->add_option("--input", f.input)->required();
    s->add_option("--format", f.format);
    s->add_option("--model", f.model);
    s->add_option("--out", f.output, "Per-document JSONL");
    s = leaf(cor, "dedup", "Exact deduplication", [](auto& r) { return r.corpus_dedup(); });
    s->add_option("--input", f.input)->required();
    s->add_option("--format", f.format);
    s->add_option("--out", f.output)->required();
  }

  auto* tr = app.add_subcommand("translate", "Machine-translate corpora");
  tr->require_subcommand(1, 1);
  {
    auto* s = leaf(tr, "corpus", "Translate a corpus JSONL", [](auto& r) { return r.translate_corpus(); });
    s->add_option("--input", f.input)->required();
    s->add_option("--format", f.format);
    s->add_option("--out", f.output)->required();
    s->add_option("--policy", f.policy, "skip|placeholder for untranslated sentences");
    s->add_option("--report", f.gaps_out, "Run report with gaps");
    s->add_option("--source-tag", f.source_tag, "Source tag for translated documents");
    translate_flags(s);
  }

  auto* ds = app.add_subcommand("dataset", "Build pretraining and finetuning datasets");
  ds->require_subcommand(1, 1);
  {
    auto* s = leaf(ds, "mixture", "Weighted pretraining mixture", [](auto& r) { return r.dataset_mixture(); });
    s->add_option("--out", f.output)->required();
    s->add_option("--manifest", f.manifest);
    s->add_option("--budget", f.budget, "Total token budget");
    s->add_option("--source", f.mixture_sources, "tag=path:weight (repeatable)");
    s->add_option("--counter", f.counter_model);
    s = leaf(ds, "sft-translate", "Translate instruction pairs", [](auto& r) { return r.dataset_sft_translate(); });
    s->add_option("--input", f.input)->required();
    s->add_option("--out", f.output)->required();
    s->add_option("--rejected", f.rejected);
    translate_flags(s);
    s = leaf(ds, "sft-mixed", "Mixed-language variants", [](auto& r) { return r.dataset_sft_mixed(); });
    s->add_option("--source", f.source_pairs)->required();
    s->add_option("--target", f.target_pairs)->required();
    s->add_option("--side", f.side, "human|ai|both");
    s->add_option("--out", f.output)->required();
    s = leaf(ds, "sft-transtask", "Synthetic translation tasks", [](auto& r) { return r.dataset_sft_transtask(); });
    s->add_option("--source", f.source_pairs)->required();
    s->add_option("--target", f.target_pairs)->required();
    s->add_option("--side", f.side, "instruction|output|both");
    s->add_option("--direction", f.direction, "forward|backward|both");
    s->add_option("--out", f.output)->required();
    s = leaf(ds, "oa-prune", "Prune ranked conversation trees", [](auto& r) { return r.dataset_oa_prune(); });
    s->add_option("--input", f.input)->required();
    s->add_option("--out", f.output)->required();
    s->add_option("--max-rank", f.max_rank);
    s->add_flag("--as-pairs", f.as_pairs, "Flatten threads into instruction pairs");
    s->add_option("--lang", f.lang, "Language code for flattened pairs");
    s = leaf(ds, "visual-translate", "Translate visual instruction records",
             [](auto& r) { return r.dataset_visual_translate(); });
    s->add_option("--input", f.input)->required();
    s->add_option("--out", f.output)->required();
    s->add_option("--rejected", f.rejected);
    translate_flags(s);
  }

  auto* bn = app.add_subcommand("bench", "Translated multiple-choice benchmark");
  bn->require_subcommand(1, 1);
  {
    auto* s = leaf(bn, "build", "Translate a benchmark", [](auto& r) { return r.bench_build(); });
    s->add_option("--items", f.items)->required();
    s->add_option("--out", f.output)->required();
    translate_flags(s);
    s = leaf(bn, "score", "Score model responses", [](auto& r) { return r.bench_score(); });
    s->add_option("--items", f.items)->required();
    s->add_option("--responses", f.responses)->required();
    s->add_option("--out", f.output, "Report JSON");
    s->add_option("--csv", f.csv, "Per-subject CSV");
    s->add_option("--label", f.labels, "key=value run metadata (repeatable)");
    s = leaf(bn, "report", "Render reports as a score table", [](auto& r) { return r.bench_report(); });
    s->add_option("--reports", f.reports)->required();
    s->add_option("--csv", f.csv, "Per-subject CSV (side by side for two reports)");
    s->add_option("--out", f.output);
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    PipelineConfig cfg;
    if (!f.config_path.empty()) {
      json j;
      try {
        j = json::parse(jsonl::read_file(f.config_path));
      } catch (const json::exception& e) {
        throw ConfigError("config " + f.config_path + ": " + e.what());
      } catch (const IoError& e) {
        throw ConfigError(e.what());
      }
      cfg = PipelineConfig::from_json(j);
    }
    if (f.seed) cfg.seed = *f.seed;
    if (f.backend) cfg.backend = *f.backend;
    if (const char* env = std::getenv(kBackendEnv); env && *env) cfg.backend = env;
    if (f.parallelism) cfg.parallelism = *f.parallelism;
    if (f.max_chunk_tokens) cfg.max_chunk_tokens = *f.max_chunk_tokens;
    if (f.bucket_bounds) cfg.bucket_bounds = detail::parse_bounds(*f.bucket_bounds);
    if (f.max_batch_items) cfg.max_batch_items = *f.max_batch_items;
    if (f.max_retries) cfg.max_retries = *f.max_retries;
    if (f.retry_base_ms) cfg.retry_base_ms = *f.retry_base_ms;
    if (f.source_lang) cfg.source_lang = *f.source_lang;
    if (f.target_lang) cfg.target_lang = *f.target_lang;
    if (f.journal) cfg.journal = *f.journal;
    if (f.counter_model) cfg.counter_model = *f.counter_model;
    if (f.budget) cfg.total_token_budget = *f.budget;
    if (!f.mixture_sources.empty()) {
      cfg.mixture_sources.clear();
      for (const auto& spec : f.mixture_sources) {
        const auto eq = spec.find('=');
        const auto colon = spec.rfind(':');
        if (eq == std::string::npos || colon == std::string::npos || colon < eq) {
          throw ConfigError("--source expects tag=path:weight, got " + spec);
        }
        MixtureSourceConfig sc{spec.substr(0, eq), spec.substr(eq + 1, colon - eq - 1), 0.0};
        try {
          sc.weight = std::stod(spec.substr(colon + 1));
        } catch (const std::exception&) {
          throw ConfigError("--source: bad weight in " + spec);
        }
        cfg.mixture_sources.push_back(sc);
      }
    }
    cfg.validate();

    const bool dry_run = f.dry_run;
    detail::Runner runner(std::move(f), std::move(cfg), out);
    json summary = actions.at(command)(runner);
    summary["command"] = command;
    summary["status"] = "ok";
    summary["dry_run"] = dry_run;
    summary["outputs"] = runner.io().planned();
    out << jsonl::dump(summary) << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace lowres::cli
