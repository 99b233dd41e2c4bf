#pragma once

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "lowres/document.hpp"
#include "lowres/error.hpp"
#include "lowres/jsonl.hpp"
#include "lowres/tokenizer.hpp"
#include "lowres/utf8.hpp"

namespace lowres::corpus {

using json = nlohmann::json;

enum class Format { kJsonl, kTxtDir };

struct IngestOptions {
  // NFC-normalize text on ingestion. Off by default so codepoints pass
  // through untouched.
  bool nfc = false;
};

inline std::string nfc_normalize(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("NFC normalizer unavailable");
  const auto src = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  const auto dst = nfc->normalize(src, status);
  if (U_FAILURE(status)) throw Error("NFC normalization failed");
  std::string out;
  dst.toUTF8String(out);
  return out;
}

inline json document_to_json(const Document& d) {
  json j{{"id", d.id}, {"source", d.source.str()}, {"text", d.text}};
  if (!d.meta.is_null()) j["meta"] = d.meta;
  return j;
}

// Schema errors are reported as "line N: ...".
inline Document document_from_json(const json& j, std::size_t line_no) {
  const std::string where = "line " + std::to_string(line_no) + ": ";
  if (!j.is_object()) throw ParseError(where + "expected a JSON object");
  for (const char* field : {"text", "id", "source"}) {
    if (!j.contains(field)) throw ParseError(where + "missing field " + field);
    if (!j[field].is_string()) throw ParseError(where + "field " + field + " must be a string");
  }
  Document d;
  d.id = j["id"].get<std::string>();
  d.source = SourceTag::parse(j["source"].get<std::string>());
  d.text = j["text"].get<std::string>();
  if (d.id.empty()) throw ParseError(where + "field id must be nonempty");
  if (const auto bad = utf8::first_invalid(d.text)) {
    throw ParseError(where + "text is not valid UTF-8 at byte " + std::to_string(*bad));
  }
  if (j.contains("meta") && !j["meta"].is_null()) {
    if (!j["meta"].is_object()) throw ParseError(where + "field meta must be an object");
    d.meta = j["meta"];
  }
  return d;
}

inline std::vector<Document> ingest_documents(const std::filesystem::path& path, Format format,
                                              const IngestOptions& opts = {}) {
  std::vector<Document> docs;
  std::unordered_set<std::string> ids;
  if (format == Format::kJsonl) {
    jsonl::for_each_line(path, [&](const json& j, std::size_t line_no) {
      Document d = document_from_json(j, line_no);
      if (!ids.insert(d.id).second) {
        throw ParseError("line " + std::to_string(line_no) + ": duplicate id " + d.id);
      }
      docs.push_back(std::move(d));
    });
  } else {
    std::error_code ec;
    if (!std::filesystem::is_directory(path, ec)) throw IoError("not a directory: " + path.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(),
              [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
    for (const auto& f : files) {
      Document d;
      d.id = f.filename().string();
      d.source = SourceTag::other("txt");
      d.text = jsonl::read_file(f);
      if (const auto bad = utf8::first_invalid(d.text)) {
        throw ParseError(f.string() + ": not valid UTF-8 at byte " + std::to_string(*bad));
      }
      docs.push_back(std::move(d));
    }
  }
  if (opts.nfc) {
    for (auto& d : docs) d.text = nfc_normalize(d.text);
  }
  return docs;
}

inline std::string documents_to_jsonl(std::span<const Document> docs) {
  std::string out;
  for (const auto& d : docs) {
    out += jsonl::dump(document_to_json(d));
    out += '\n';
  }
  return out;
}

inline void emit_documents(const std::filesystem::path& path, std::span<const Document> docs) {
  jsonl::write_file(path, documents_to_jsonl(docs));
}

struct ScriptStats {
  std::uint64_t total_chars = 0;     // non-whitespace codepoints
  std::uint64_t ethiopic_chars = 0;
  double ethiopic_ratio = 0.0;

  ScriptStats& operator+=(const ScriptStats& o) {
    total_chars += o.total_chars;
    ethiopic_chars += o.ethiopic_chars;
    ethiopic_ratio = total_chars == 0 ? 0.0
                                      : static_cast<double>(ethiopic_chars) / static_cast<double>(total_chars);
    return *this;
  }
};

inline ScriptStats script_stats(std::string_view text) {
  ScriptStats s;
  utf8::for_each_codepoint(text, [&](char32_t cp, std::size_t, std::size_t) {
    if (utf8::is_whitespace(cp)) return;
    ++s.total_chars;
    if (utf8::is_ethiopic(cp)) ++s.ethiopic_chars;
  });
  if (s.total_chars > 0) {
    s.ethiopic_ratio = static_cast<double>(s.ethiopic_chars) / static_cast<double>(s.total_chars);
  }
  return s;
}

inline json stats_to_json(const ScriptStats& s) {
  return json{{"total_chars", s.total_chars},
              {"ethiopic_chars", s.ethiopic_chars},
              {"ethiopic_ratio", s.ethiopic_ratio}};
}

inline std::size_t count_tokens(const Document& doc, const tokenizer::TokenizerModel& model) {
  return model.count(doc.text);
}

// Keeps the first document carrying each exact text.
inline std::vector<Document> dedup_exact(std::span<const Document> docs) {
  std::unordered_set<std::string_view> seen;
  std::vector<Document> out;
  for (const auto& d : docs) {
    if (seen.insert(d.text).second) out.push_back(d);
  }
  return out;
}

}  // namespace lowres::corpus
