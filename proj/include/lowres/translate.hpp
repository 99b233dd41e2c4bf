#pragma once

#include <time.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "lowres/backend.hpp"
#include "lowres/error.hpp"
#include "lowres/jsonl.hpp"
#include "lowres/tokenizer.hpp"
#include "lowres/utf8.hpp"

namespace lowres::translate {

struct SentenceSpan {
  std::string doc_id;
  std::size_t index = 0;
  std::string text;
  std::size_t token_count = 0;
  // Whitespace before the first span of a document (empty for later spans).
  std::string prefix;
  // Whitespace between this span and the next one, or the end of the text.
  std::string separator;

  friend bool operator==(const SentenceSpan&, const SentenceSpan&) = default;
};

// Splits after ". ", "! ", "? ", "።", "፧", "፨" and at newlines. Spans are
// trimmed; whitespace-only pieces are dropped and their text folded into the
// neighbouring separator, so prefix + sum(text + separator) is the input.
inline std::vector<SentenceSpan> split_sentences(std::string_view text, const std::string& doc_id = {}) {
  std::vector<std::pair<std::size_t, std::size_t>> raw;
  std::size_t seg_start = 0;
  utf8::for_each_codepoint(text, [&](char32_t cp, std::size_t off, std::size_t len) {
    const std::size_t next = off + len;
    if (cp == '\n') {
      raw.emplace_back(seg_start, off);
      seg_start = off;
    } else if ((cp == '.' || cp == '!' || cp == '?') && next < text.size() && text[next] == ' ') {
      raw.emplace_back(seg_start, next);
      seg_start = next;
    } else if (cp == 0x1362 || cp == 0x1367 || cp == 0x1368) {
      raw.emplace_back(seg_start, next);
      seg_start = next;
    }
  });
  raw.emplace_back(seg_start, text.size());

  auto is_ws_at = [&](std::size_t pos, std::size_t& len) {
    const auto d = utf8::decode_at(text, pos);
    if (!d) return false;
    len = d->length;
    return utf8::is_whitespace(d->codepoint);
  };

  std::vector<std::pair<std::size_t, std::size_t>> cores;
  for (auto [b, e] : raw) {
    std::size_t len = 0;
    while (b < e && is_ws_at(b, len)) b += len;
    // Trim trailing whitespace by scanning forward for the last non-space end.
    std::size_t last_end = b;
    std::size_t pos = b;
    while (pos < e) {
      if (is_ws_at(pos, len)) {
        pos += len;
      } else {
        const auto d = utf8::decode_at(text, pos);
        pos += d ? d->length : 1;
        last_end = pos;
      }
    }
    if (last_end > b) cores.emplace_back(b, last_end);
  }

  std::vector<SentenceSpan> spans;
  spans.reserve(cores.size());
  for (std::size_t i = 0; i < cores.size(); ++i) {
    SentenceSpan s;
    s.doc_id = doc_id;
    s.index = i;
    s.text = std::string(text.substr(cores[i].first, cores[i].second - cores[i].first));
    if (i == 0) s.prefix = std::string(text.substr(0, cores[i].first));
    const std::size_t sep_end = i + 1 < cores.size() ? cores[i + 1].first : text.size();
    s.separator = std::string(text.substr(cores[i].second, sep_end - cores[i].second));
    spans.push_back(std::move(s));
  }
  return spans;
}

// Token count for chunk budgeting. Literal word markers are counted as spaces
// so arbitrary input never fails.
inline std::size_t budget_tokens(const tokenizer::TokenizerModel& counter, std::string_view text) {
  if (text.find(utf8::kWordMarker) == std::string_view::npos) return counter.count(text);
  std::string copy;
  std::size_t pos = 0;
  while (pos < text.size()) {
    if (text.substr(pos).starts_with(utf8::kWordMarker)) {
      copy.push_back(' ');
      pos += utf8::kWordMarker.size();
    } else {
      copy.push_back(text[pos++]);
    }
  }
  return counter.count(copy);
}

inline void count_spans(std::span<SentenceSpan> spans, const tokenizer::TokenizerModel& counter) {
  for (auto& s : spans) s.token_count = budget_tokens(counter, s.text);
}

struct Chunk {
  std::size_t chunk_id = 0;
  std::string doc_id;
  std::vector<std::size_t> sentence_indices;
  std::string text;
  std::size_t token_count = 0;  // sum of the member sentence counts
  std::string separator;        // whitespace after the last member sentence
};

struct Exclusion {
  std::string doc_id;
  std::size_t sentence_index = 0;
  std::size_t token_count = 0;
  std::string reason;
  std::string text;
  std::string separator;
};

struct PlannedDocument {
  std::string doc_id;
  std::string prefix;
  std::size_t sentence_count = 0;
};

struct ChunkPlan {
  std::vector<PlannedDocument> documents;
  std::vector<Chunk> chunks;
  std::vector<Exclusion> excluded;
  std::size_t max_chunk_tokens = 0;
};

// Greedy packing over spans that already carry token counts. Chunks never
// cross documents or skip an excluded sentence.
inline ChunkPlan plan_chunks(std::span<const SentenceSpan> spans, std::size_t max_chunk_tokens) {
  if (max_chunk_tokens == 0) throw ConfigError("max_chunk_tokens must be at least 1");
  ChunkPlan plan;
  plan.max_chunk_tokens = max_chunk_tokens;
  std::optional<Chunk> cur;
  const SentenceSpan* last_in_chunk = nullptr;
  auto flush = [&] {
    if (cur) {
      cur->separator = last_in_chunk->separator;
      cur->chunk_id = plan.chunks.size();
      plan.chunks.push_back(std::move(*cur));
      cur.reset();
    }
  };
  for (const auto& s : spans) {
    if (plan.documents.empty() || plan.documents.back().doc_id != s.doc_id) {
      flush();
      plan.documents.push_back(PlannedDocument{s.doc_id, s.prefix, 0});
    }
    ++plan.documents.back().sentence_count;
    if (s.token_count > max_chunk_tokens) {
      flush();
      plan.excluded.push_back(Exclusion{s.doc_id, s.index, s.token_count, "over_limit", s.text, s.separator});
      continue;
    }
    if (cur && cur->token_count + s.token_count <= max_chunk_tokens) {
      cur->text += last_in_chunk->separator;
      cur->text += s.text;
      cur->token_count += s.token_count;
      cur->sentence_indices.push_back(s.index);
    } else {
      flush();
      cur = Chunk{0, s.doc_id, {s.index}, s.text, s.token_count, {}};
    }
    last_in_chunk = &s;
  }
  flush();
  return plan;
}

inline ChunkPlan plan_chunks(std::span<const SentenceSpan> spans, std::size_t max_chunk_tokens,
                             const tokenizer::TokenizerModel& counter) {
  std::vector<SentenceSpan> counted(spans.begin(), spans.end());
  count_spans(counted, counter);
  return plan_chunks(std::span<const SentenceSpan>(counted), max_chunk_tokens);
}

struct SourceText {
  std::string doc_id;
  std::string text;
};

// Splits every text and plans them together. Whitespace-only texts still get a
// PlannedDocument so restoration can reproduce them.
inline ChunkPlan plan_documents(std::span<const SourceText> docs, std::size_t max_chunk_tokens,
                                const tokenizer::TokenizerModel& counter) {
  std::vector<SentenceSpan> spans;
  std::vector<PlannedDocument> order;
  for (const auto& d : docs) {
    auto s = split_sentences(d.text, d.doc_id);
    if (s.empty()) {
      order.push_back(PlannedDocument{d.doc_id, d.text, 0});
    } else {
      order.push_back(PlannedDocument{d.doc_id, s.front().prefix, s.size()});
    }
    for (auto& span : s) spans.push_back(std::move(span));
  }
  auto plan = plan_chunks(std::span<const SentenceSpan>(spans), max_chunk_tokens, counter);
  plan.documents = std::move(order);
  return plan;
}

struct Batch {
  std::size_t batch_id = 0;
  std::vector<std::size_t> chunk_ids;
  std::vector<std::string> texts;
  std::size_t bucket = 0;
  std::string label;
};

inline std::string bucket_label(std::span<const std::size_t> bounds, std::size_t bucket) {
  if (bucket < bounds.size()) return "<=" + std::to_string(bounds[bucket]);
  return ">" + std::to_string(bounds.back());
}

// Chunks go to the first bucket whose bound is >= their count; the last bucket
// is unbounded. Batches are emitted bucket by bucket in chunk_id order.
inline std::vector<Batch> schedule_batches(const ChunkPlan& plan, std::span<const std::size_t> bounds,
                                           std::size_t max_batch_items) {
  if (bounds.empty()) throw ConfigError("bucket_bounds must be nonempty");
  if (!std::is_sorted(bounds.begin(), bounds.end()) ||
      std::adjacent_find(bounds.begin(), bounds.end()) != bounds.end()) {
    throw ConfigError("bucket_bounds must be strictly ascending");
  }
  if (max_batch_items == 0) throw ConfigError("max_batch_items must be at least 1");
  std::vector<std::vector<const Chunk*>> buckets(bounds.size() + 1);
  for (const auto& c : plan.chunks) {
    const auto it = std::lower_bound(bounds.begin(), bounds.end(), c.token_count);
    buckets[static_cast<std::size_t>(it - bounds.begin())].push_back(&c);
  }
  std::vector<Batch> batches;
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    auto& members = buckets[b];
    std::sort(members.begin(), members.end(), [](auto* x, auto* y) { return x->chunk_id < y->chunk_id; });
    for (std::size_t i = 0; i < members.size(); i += max_batch_items) {
      Batch batch;
      batch.batch_id = batches.size();
      batch.bucket = b;
      batch.label = bucket_label(bounds, b);
      for (std::size_t k = i; k < std::min(members.size(), i + max_batch_items); ++k) {
        batch.chunk_ids.push_back(members[k]->chunk_id);
        batch.texts.push_back(members[k]->text);
      }
      batches.push_back(std::move(batch));
    }
  }
  return batches;
}

enum class ChunkStatus { kOk, kFailed };

struct TranslatedChunk {
  std::size_t chunk_id = 0;
  std::string translation;
  std::size_t attempts = 0;
  ChunkStatus status = ChunkStatus::kFailed;
};

struct RetryPolicy {
  std::size_t max_retries = 3;
  std::chrono::milliseconds base_delay{1000};
  double multiplier = 2.0;
  double jitter = 0.25;  // fraction of the delay added uniformly at random
};

struct RunOptions {
  std::string source_lang = "eng";
  std::string target_lang = "amh";
  std::size_t parallelism = 1;
  RetryPolicy retry;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> journal;
  bool fresh = false;  // ignore and truncate an existing journal
};

struct RunStats {
  std::uint64_t backend_calls = 0;
  std::uint64_t failed_batches = 0;
  std::uint64_t resumed_batches = 0;
  std::uint64_t translated_texts = 0;
};

struct RunResult {
  std::vector<TranslatedChunk> chunks;  // in batch order
  RunStats stats;
};

namespace detail {

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct JournalEntry {
  std::vector<std::size_t> chunk_ids;
  std::vector<std::string> translations;
  std::size_t attempts = 0;
};

// Latest ok record per batch id. Records with other statuses are ignored so the
// batch is attempted again.
inline std::unordered_map<std::size_t, JournalEntry> load_journal(const std::filesystem::path& path) {
  std::unordered_map<std::size_t, JournalEntry> done;
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return done;
  std::ifstream in(path, std::ios::binary);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      // A torn final line from a crash mid-write.
      continue;
    }
    if (j.value("status", "") != "ok") continue;
    JournalEntry e;
    e.chunk_ids = j.at("chunk_ids").get<std::vector<std::size_t>>();
    e.translations = j.at("translations").get<std::vector<std::string>>();
    e.attempts = j.value("attempts", std::size_t{1});
    done[j.at("batch_id").get<std::size_t>()] = std::move(e);
  }
  return done;
}

inline double unit_random(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace detail

// Up to `parallelism` backend calls run concurrently. Each batch is one call;
// a failed call (exception or wrong result count) is retried with exponential
// backoff, and after max_retries every chunk of the batch is marked failed.
inline RunResult run_translation(std::span<const Batch> batches, TranslationBackend& backend,
                                 const RunOptions& opts) {
  if (opts.parallelism == 0) throw ConfigError("parallelism must be at least 1");
  std::unordered_map<std::size_t, detail::JournalEntry> resumed;
  std::unique_ptr<jsonl::DurableAppender> journal;
  if (opts.journal) {
    if (opts.fresh) {
      std::error_code ec;
      std::filesystem::remove(*opts.journal, ec);
    } else {
      resumed = detail::load_journal(*opts.journal);
    }
    journal = std::make_unique<jsonl::DurableAppender>(*opts.journal);
  }

  struct Slot {
    std::vector<std::string> translations;
    std::size_t attempts = 0;
    bool ok = false;
    bool resumed = false;
  };
  std::vector<Slot> slots(batches.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::uint64_t> calls{0};

  auto work = [&] {
    for (;;) {
      const std::size_t bi = next.fetch_add(1);
      if (bi >= batches.size()) return;
      const Batch& batch = batches[bi];
      Slot& slot = slots[bi];
      if (const auto it = resumed.find(batch.batch_id); it != resumed.end()) {
        if (it->second.chunk_ids != batch.chunk_ids || it->second.translations.size() != batch.texts.size()) {
          throw Error("journal entry for batch " + std::to_string(batch.batch_id) +
                      " does not match the current plan; rerun with a fresh journal");
        }
        slot.translations = it->second.translations;
        slot.attempts = it->second.attempts;
        slot.ok = true;
        slot.resumed = true;
        continue;
      }
      std::mt19937_64 rng(opts.seed ^ (0x9E3779B97F4A7C15ull * (batch.batch_id + 1)));
      auto delay = static_cast<double>(opts.retry.base_delay.count());
      for (std::size_t attempt = 1; attempt <= opts.retry.max_retries + 1; ++attempt) {
        slot.attempts = attempt;
        calls.fetch_add(1);
        try {
          auto out = backend.translate(batch.texts, opts.source_lang, opts.target_lang);
          if (out.size() == batch.texts.size()) {
            slot.translations = std::move(out);
            slot.ok = true;
            break;
          }
        } catch (const BackendError&) {
        }
        if (attempt <= opts.retry.max_retries && delay > 0) {
          const double wait = delay * (1.0 + opts.retry.jitter * detail::unit_random(rng));
          std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(wait));
        }
        delay *= opts.retry.multiplier;
      }
      if (journal) {
        json rec{{"batch_id", batch.batch_id},
                 {"status", slot.ok ? "ok" : "failed"},
                 {"timestamp", detail::utc_timestamp()},
                 {"chunk_ids", batch.chunk_ids},
                 {"attempts", slot.attempts}};
        if (slot.ok) rec["translations"] = slot.translations;
        journal->append(rec);
      }
    }
  };

  std::exception_ptr failure;
  std::mutex failure_mu;
  {
    const std::size_t n = std::min(opts.parallelism, std::max<std::size_t>(batches.size(), 1));
    std::vector<std::jthread> workers;
    workers.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      workers.emplace_back([&] {
        try {
          work();
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
          next.store(batches.size());
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);

  RunResult result;
  result.stats.backend_calls = calls.load();
  for (std::size_t bi = 0; bi < batches.size(); ++bi) {
    const auto& batch = batches[bi];
    const auto& slot = slots[bi];
    if (!slot.ok) ++result.stats.failed_batches;
    if (slot.resumed) ++result.stats.resumed_batches;
    for (std::size_t k = 0; k < batch.chunk_ids.size(); ++k) {
      TranslatedChunk tc;
      tc.chunk_id = batch.chunk_ids[k];
      tc.attempts = slot.attempts;
      tc.status = slot.ok ? ChunkStatus::kOk : ChunkStatus::kFailed;
      if (slot.ok) {
        tc.translation = slot.translations[k];
        ++result.stats.translated_texts;
      }
      result.chunks.push_back(std::move(tc));
    }
  }
  return result;
}

enum class FailurePolicy { kSkip, kPlaceholder };

inline constexpr std::string_view kDefaultPlaceholder = "\xE2\x9F\xA6GAP\xE2\x9F\xA7";  // ⟦GAP⟧

struct Gap {
  std::string doc_id;
  std::vector<std::size_t> sentence_indices;
  std::string reason;  // "failed" or "over_limit"

  friend bool operator==(const Gap&, const Gap&) = default;
};

struct RestoredDocument {
  std::string doc_id;
  std::string text;

  friend bool operator==(const RestoredDocument&, const RestoredDocument&) = default;
};

struct Restored {
  std::vector<RestoredDocument> documents;
  std::vector<Gap> gaps;

  friend bool operator==(const Restored&, const Restored&) = default;
};

// Reassembles translations in original sentence order. The result depends only
// on the set of results, never on their order.
inline Restored restore_order(const ChunkPlan& plan, std::span<const TranslatedChunk> results,
                              FailurePolicy policy, std::string_view placeholder = kDefaultPlaceholder) {
  std::vector<const TranslatedChunk*> by_chunk(plan.chunks.size(), nullptr);
  for (const auto& r : results) {
    if (r.chunk_id >= by_chunk.size()) {
      throw Error("result for unknown chunk_id " + std::to_string(r.chunk_id));
    }
    if (by_chunk[r.chunk_id]) throw Error("duplicate result for chunk_id " + std::to_string(r.chunk_id));
    by_chunk[r.chunk_id] = &r;
  }
  for (std::size_t i = 0; i < by_chunk.size(); ++i) {
    if (!by_chunk[i]) throw Error("missing result for chunk_id " + std::to_string(i));
  }

  struct Unit {
    std::size_t first_index;
    const Chunk* chunk;
    const Exclusion* exclusion;
  };
  std::unordered_map<std::string, std::vector<Unit>> units;
  for (const auto& c : plan.chunks) units[c.doc_id].push_back({c.sentence_indices.front(), &c, nullptr});
  for (const auto& e : plan.excluded) units[e.doc_id].push_back({e.sentence_index, nullptr, &e});

  Restored out;
  for (const auto& doc : plan.documents) {
    RestoredDocument rd{doc.doc_id, doc.prefix};
    auto& list = units[doc.doc_id];
    std::sort(list.begin(), list.end(), [](const Unit& a, const Unit& b) { return a.first_index < b.first_index; });
    for (const auto& u : list) {
      const std::string& sep = u.chunk ? u.chunk->separator : u.exclusion->separator;
      if (u.chunk) {
        const auto* r = by_chunk[u.chunk->chunk_id];
        if (r->status == ChunkStatus::kOk) {
          rd.text += r->translation;
          rd.text += sep;
          continue;
        }
        out.gaps.push_back(Gap{doc.doc_id, u.chunk->sentence_indices, "failed"});
      } else {
        out.gaps.push_back(Gap{doc.doc_id, {u.exclusion->sentence_index}, u.exclusion->reason});
      }
      if (policy == FailurePolicy::kPlaceholder) {
        rd.text += placeholder;
        rd.text += sep;
      }
    }
    out.documents.push_back(std::move(rd));
  }
  return out;
}

struct PipelineOptions {
  // Defaults to the byte-fallback base model when null.
  const tokenizer::TokenizerModel* counter = nullptr;
  std::size_t max_chunk_tokens = 256;
  std::vector<std::size_t> bucket_bounds = {32, 64, 128, 256};
  std::size_t max_batch_items = 16;
  RunOptions run;
};

inline const tokenizer::TokenizerModel& default_counter() {
  static const tokenizer::TokenizerModel model;
  return model;
}

struct TextTranslation {
  std::string text;
  bool ok = false;
  std::string reason;  // set when !ok
};

struct PipelineResult {
  ChunkPlan plan;
  std::vector<Batch> batches;
  RunResult run;
  Restored restored;
};

// split -> plan -> schedule -> run -> restore over a set of documents.
inline PipelineResult translate_documents(std::span<const SourceText> docs, TranslationBackend& backend,
                                          const PipelineOptions& opts,
                                          FailurePolicy policy = FailurePolicy::kSkip) {
  const auto& counter = opts.counter ? *opts.counter : default_counter();
  PipelineResult r;
  r.plan = plan_documents(docs, opts.max_chunk_tokens, counter);
  r.batches = schedule_batches(r.plan, opts.bucket_bounds, opts.max_batch_items);
  r.run = run_translation(r.batches, backend, opts.run);
  r.restored = restore_order(r.plan, r.run.chunks, policy);
  return r;
}

// Translates independent texts in one pipeline run. A text is ok only if every
// one of its sentences was translated.
inline std::vector<TextTranslation> translate_texts(std::span<const std::string> texts,
                                                    TranslationBackend& backend, const PipelineOptions& opts) {
  std::vector<SourceText> docs;
  docs.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) docs.push_back({std::to_string(i), texts[i]});
  const auto r = translate_documents(docs, backend, opts);
  std::vector<TextTranslation> out(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    out[i].text = r.restored.documents[i].text;
    out[i].ok = true;
  }
  for (const auto& g : r.restored.gaps) {
    auto& t = out[std::stoul(g.doc_id)];
    if (t.ok) {
      t.ok = false;
      t.reason = g.reason == "failed" ? "translation failed" : "sentence over token limit";
    }
  }
  return out;
}

inline json plan_summary(const ChunkPlan& plan, std::span<const Batch> batches) {
  json excluded = json::array();
  for (const auto& e : plan.excluded) {
    excluded.push_back({{"doc_id", e.doc_id},
                        {"sentence_index", e.sentence_index},
                        {"token_count", e.token_count},
                        {"reason", e.reason}});
  }
  return json{{"documents", plan.documents.size()},
              {"chunks", plan.chunks.size()},
              {"batches", batches.size()},
              {"max_chunk_tokens", plan.max_chunk_tokens},
              {"excluded", std::move(excluded)}};
}

inline json gaps_to_json(std::span<const Gap> gaps) {
  json arr = json::array();
  for (const auto& g : gaps) {
    arr.push_back({{"doc_id", g.doc_id}, {"sentence_indices", g.sentence_indices}, {"reason", g.reason}});
  }
  return arr;
}

}  // namespace lowres::translate
