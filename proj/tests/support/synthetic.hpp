#pragma once

// Deterministic generators shared by unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "lowres/utf8.hpp"

namespace lowres::testing {

// Random unique scratch directory, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("lowres-test-" + std::to_string(rd()) + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::uint64_t below(std::mt19937_64& rng, std::uint64_t n) {
  return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(rng);
}

// Zipf-distributed index in [0, n).
class Zipf {
 public:
  Zipf(std::size_t n, double s) : cdf_(n) {
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += 1.0 / std::pow(static_cast<double>(i + 1), s);
      cdf_[i] = acc;
    }
    for (auto& c : cdf_) c /= acc;
  }
  std::size_t operator()(std::mt19937_64& rng) const {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }

 private:
  std::vector<double> cdf_;
};

// Amharic-like text: Zipfian stems built from Ethiopic syllables, a small
// suffix inventory, word separators and full stops.
class EthiopicTextGenerator {
 public:
  explicit EthiopicTextGenerator(std::uint64_t seed, std::size_t stems = 4000)
      : rng_(seed), stem_pick_(stems, 1.1), suffix_pick_(12, 1.3) {
    std::mt19937_64 lex(seed ^ 0x5eedULL);
    for (std::size_t i = 0; i < stems; ++i) {
      const auto len = 1 + below(lex, 4);
      std::string w;
      for (std::size_t k = 0; k < len; ++k) w += syllable(lex);
      stems_.push_back(w);
    }
    for (std::size_t i = 0; i < 12; ++i) {
      std::string s;
      const auto len = i == 0 ? 0 : 1 + below(lex, 2);
      for (std::size_t k = 0; k < len; ++k) s += syllable(lex);
      suffixes_.push_back(s);
    }
  }

  std::string word() { return stems_[stem_pick_(rng_)] + suffixes_[suffix_pick_(rng_)]; }

  std::string sentence() {
    const auto n = 3 + below(rng_, 10);
    std::string s;
    for (std::size_t i = 0; i < n; ++i) {
      if (i) s += below(rng_, 8) == 0 ? "\xE1\x8D\xA3 " : " ";  // ፣
      s += word();
    }
    return s + "\xE1\x8D\xA2";  // ።
  }

  // Paragraph of at least `bytes` bytes.
  std::string text(std::size_t bytes) {
    std::string out;
    while (out.size() < bytes) {
      if (!out.empty()) out += ' ';
      out += sentence();
    }
    return out;
  }

 private:
  static std::string syllable(std::mt19937_64& rng) {
    // Core syllabary rows U+1200..U+1357, 7 orders each.
    const auto row = below(rng, 43);
    const auto order = below(rng, 7);
    return utf8::encode(static_cast<char32_t>(0x1200 + row * 8 + order));
  }

  std::mt19937_64 rng_;
  Zipf stem_pick_;
  Zipf suffix_pick_;
  std::vector<std::string> stems_;
  std::vector<std::string> suffixes_;
};

inline const std::vector<std::string>& english_words() {
  static const std::vector<std::string> words = {
      "the",   "of",     "and",    "to",     "in",     "is",      "was",    "for",    "that",   "with",
      "as",    "on",     "by",     "he",     "it",     "at",      "from",   "his",    "an",     "were",
      "are",   "which",  "this",   "be",     "or",     "has",     "had",    "first",  "not",    "their",
      "after", "but",    "who",    "they",   "new",    "have",    "her",    "she",    "two",    "been",
      "other", "when",   "there",  "all",    "during", "into",    "school", "time",   "may",    "years",
      "more",  "most",   "only",   "over",   "city",   "some",    "world",  "would",  "where",  "later",
      "up",    "such",   "used",   "many",   "can",    "state",   "about",  "national", "out",  "known",
      "river", "people", "church", "water",  "music",  "history", "family", "team",   "language", "market",
      "hello", "how",    "are",    "you",    "good",   "morning", "thank",  "question", "answer", "model"};
  return words;
}

// ASCII sentence with mixed case, digits and punctuation.
inline std::string english_sentence(std::mt19937_64& rng) {
  const auto& w = english_words();
  const auto n = 3 + below(rng, 14);
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += below(rng, 10) == 0 ? ", " : " ";
    std::string word = w[below(rng, w.size())];
    if (i == 0 || below(rng, 15) == 0) word[0] = static_cast<char>(word[0] - 'a' + 'A');
    if (below(rng, 25) == 0) word = std::to_string(below(rng, 3000));
    s += word;
  }
  static constexpr char kEnd[] = ".?!";
  s += kEnd[below(rng, 3)];
  return s;
}

// Random valid UTF-8 drawn from ASCII, Latin, Ethiopic, CJK, emoji and
// whitespace, never containing U+2581.
inline std::string random_utf8(std::mt19937_64& rng, std::size_t max_codepoints) {
  const auto n = below(rng, max_codepoints + 1);
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    char32_t cp = 0;
    switch (below(rng, 8)) {
      case 0: cp = static_cast<char32_t>(below(rng, 0x80)); break;
      case 1: cp = U' '; break;
      case 2: cp = static_cast<char32_t>(0x80 + below(rng, 0x780)); break;
      case 3: cp = static_cast<char32_t>(0x1200 + below(rng, 0x1A0)); break;
      case 4: cp = static_cast<char32_t>(0x4E00 + below(rng, 0x5000)); break;
      case 5: cp = static_cast<char32_t>(0x1F300 + below(rng, 0x300)); break;
      case 6: {
        static constexpr char32_t kSpaces[] = {U'\t', U'\n', 0x00A0, 0x3000, 0x2028, 0x200B};
        cp = kSpaces[below(rng, 6)];
        break;
      }
      default: cp = static_cast<char32_t>(0x800 + below(rng, 0xF000)); break;
    }
    if ((cp >= 0xD800 && cp <= 0xDFFF) || cp == 0x2581) cp = U'x';
    utf8::append(s, cp);
  }
  return s;
}

}  // namespace lowres::testing
