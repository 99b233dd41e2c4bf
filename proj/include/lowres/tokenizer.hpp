#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "lowres/document.hpp"
#include "lowres/error.hpp"
#include "lowres/jsonl.hpp"
#include "lowres/utf8.hpp"

namespace lowres::tokenizer {

using TokenId = std::uint32_t;
using json = nlohmann::json;

struct SpecialIds {
  TokenId unk = 0;
  TokenId bos = 1;
  TokenId eos = 2;

  friend bool operator==(const SpecialIds&, const SpecialIds&) = default;
};

inline std::string byte_piece_name(std::uint8_t b) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string s = "<0x";
  s.push_back(kHex[b >> 4]);
  s.push_back(kHex[b & 0xF]);
  s.push_back('>');
  return s;
}

// Pieces are byte strings. Those that are valid UTF-8 serialize as plain JSON
// strings; partial sequences produced by byte-level training serialize as
// {"hex": "..."}.
inline json piece_to_json(const std::string& piece) {
  if (utf8::is_valid(piece)) return piece;
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (const char c : piece) {
    const auto b = static_cast<unsigned char>(c);
    hex.push_back(kHex[b >> 4]);
    hex.push_back(kHex[b & 0xF]);
  }
  return json{{"hex", hex}};
}

inline std::string piece_from_json(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_object() && j.contains("hex") && j["hex"].is_string()) {
    const auto hex = j["hex"].get<std::string>();
    if (hex.size() % 2 != 0) throw ParseError("odd-length hex piece");
    auto nibble = [](char c) -> int {
      if (c >= '0' && c <= '9') return c - '0';
      if (c >= 'a' && c <= 'f') return c - 'a' + 10;
      if (c >= 'A' && c <= 'F') return c - 'A' + 10;
      throw ParseError(std::string("bad hex digit in piece: ") + c);
    };
    std::string out;
    for (std::size_t i = 0; i < hex.size(); i += 2) {
      out.push_back(static_cast<char>(nibble(hex[i]) * 16 + nibble(hex[i + 1])));
    }
    return out;
  }
  throw ParseError("piece must be a string or {\"hex\": ...}");
}

// Ordered piece list where the piece at index i has id i. Contains a special
// region and a 256-entry byte region; everything else is matchable text.
class Vocabulary {
 public:
  Vocabulary() = default;

  // <unk>, <s>, </s>, the 256 byte pieces, the bare word marker, then `extra`.
  static Vocabulary byte_fallback(std::span<const std::string> extra = {}) {
    std::vector<std::string> pieces = {"<unk>", "<s>", "</s>"};
    for (int b = 0; b < 256; ++b) pieces.push_back(byte_piece_name(static_cast<std::uint8_t>(b)));
    pieces.emplace_back(utf8::kWordMarker);
    for (const auto& p : extra) pieces.push_back(p);
    return from_pieces(std::move(pieces), SpecialIds{});
  }

  // The byte region is located as the first run of <0x00>..<0xFF>.
  static Vocabulary from_pieces(std::vector<std::string> pieces, SpecialIds special) {
    Vocabulary v;
    v.special_ = special;
    const auto n = pieces.size();
    for (const TokenId id : {special.unk, special.bos, special.eos}) {
      if (id >= n) throw ParseError("special id " + std::to_string(id) + " out of range");
    }
    const auto first = std::find(pieces.begin(), pieces.end(), byte_piece_name(0));
    if (first == pieces.end()) throw ParseError("vocabulary lacks a byte-fallback region");
    v.byte_begin_ = static_cast<TokenId>(first - pieces.begin());
    if (v.byte_begin_ + 256 > n) throw ParseError("byte-fallback region truncated");
    for (int b = 0; b < 256; ++b) {
      if (pieces[v.byte_begin_ + b] != byte_piece_name(static_cast<std::uint8_t>(b))) {
        throw ParseError("byte-fallback region is not contiguous at byte " + std::to_string(b));
      }
    }
    for (const TokenId id : {special.unk, special.bos, special.eos}) {
      if (id >= v.byte_begin_ && id < v.byte_begin_ + 256) {
        throw ParseError("special id overlaps byte region");
      }
    }
    v.index_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (pieces[i].empty()) throw ParseError("empty piece at id " + std::to_string(i));
      if (!v.index_.emplace(pieces[i], static_cast<TokenId>(i)).second) {
        throw ParseError("duplicate piece at id " + std::to_string(i));
      }
    }
    v.pieces_ = std::move(pieces);
    return v;
  }

  std::size_t size() const { return pieces_.size(); }
  const std::vector<std::string>& pieces() const { return pieces_; }
  const std::string& piece(TokenId id) const { return pieces_.at(id); }
  const SpecialIds& special() const { return special_; }
  TokenId byte_begin() const { return byte_begin_; }
  TokenId byte_id(std::uint8_t b) const { return byte_begin_ + b; }

  bool is_byte(TokenId id) const { return id >= byte_begin_ && id < byte_begin_ + 256; }
  bool is_special(TokenId id) const {
    return id == special_.unk || id == special_.bos || id == special_.eos;
  }
  bool is_text(TokenId id) const { return id < size() && !is_byte(id) && !is_special(id); }

  std::optional<TokenId> find(std::string_view piece) const {
    const auto it = index_.find(std::string(piece));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  bool contains(std::string_view piece) const { return find(piece).has_value(); }

 private:
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, TokenId> index_;
  SpecialIds special_;
  TokenId byte_begin_ = 0;
};

// Pieces learned on target-language text.
struct ExtensionVocab {
  std::vector<std::string> pieces;

  // Throws ParseError on an empty piece, an all-ASCII piece or a duplicate.
  void validate() const {
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      const auto& p = pieces[i];
      if (p.empty()) throw ParseError("extension piece " + std::to_string(i) + " is empty");
      if (utf8::is_ascii(p)) throw ParseError("extension piece " + std::to_string(i) + " is pure ASCII");
      if (!seen.insert(p).second) throw ParseError("duplicate extension piece " + std::to_string(i));
    }
  }
};

namespace detail {

// Byte trie over text pieces, compacted into sorted child arrays with a dense
// root table. Used for greedy longest-match lookups.
class PieceTrie {
 public:
  void build(const Vocabulary& vocab) {
    struct BuildNode {
      std::map<std::uint8_t, std::uint32_t> kids;
      std::int64_t token = -1;
    };
    std::vector<BuildNode> tmp(1);
    for (TokenId id = 0; id < vocab.size(); ++id) {
      if (!vocab.is_text(id)) continue;
      std::uint32_t node = 0;
      for (const char c : vocab.piece(id)) {
        const auto b = static_cast<std::uint8_t>(c);
        auto it = tmp[node].kids.find(b);
        if (it == tmp[node].kids.end()) {
          tmp.emplace_back();
          it = tmp[node].kids.emplace(b, static_cast<std::uint32_t>(tmp.size() - 1)).first;
        }
        node = it->second;
      }
      tmp[node].token = id;
    }
    nodes_.assign(tmp.size(), Node{});
    edge_bytes_.clear();
    edge_targets_.clear();
    for (std::size_t i = 0; i < tmp.size(); ++i) {
      nodes_[i].token = tmp[i].token;
      nodes_[i].first = static_cast<std::uint32_t>(edge_bytes_.size());
      nodes_[i].count = static_cast<std::uint32_t>(tmp[i].kids.size());
      for (const auto& [b, t] : tmp[i].kids) {
        edge_bytes_.push_back(b);
        edge_targets_.push_back(t);
      }
    }
    root_.fill(kNone);
    for (const auto& [b, t] : tmp[0].kids) root_[b] = t;
  }

  // Longest text piece that is a prefix of `s`: (token, byte length).
  std::optional<std::pair<TokenId, std::size_t>> longest_prefix(std::string_view s) const {
    if (s.empty()) return std::nullopt;
    std::uint32_t node = root_[static_cast<std::uint8_t>(s[0])];
    std::optional<std::pair<TokenId, std::size_t>> best;
    std::size_t depth = 1;
    while (node != kNone) {
      if (nodes_[node].token >= 0) best = {{static_cast<TokenId>(nodes_[node].token), depth}};
      if (depth == s.size()) break;
      node = child(node, static_cast<std::uint8_t>(s[depth]));
      ++depth;
    }
    return best;
  }

 private:
  static constexpr std::uint32_t kNone = 0xFFFFFFFFu;

  struct Node {
    std::int64_t token = -1;
    std::uint32_t first = 0;
    std::uint32_t count = 0;
  };

  std::uint32_t child(std::uint32_t node, std::uint8_t b) const {
    const auto begin = edge_bytes_.begin() + nodes_[node].first;
    const auto end = begin + nodes_[node].count;
    const auto it = std::lower_bound(begin, end, b);
    if (it == end || *it != b) return kNone;
    return edge_targets_[static_cast<std::size_t>(it - edge_bytes_.begin())];
  }

  std::vector<Node> nodes_;
  std::vector<std::uint8_t> edge_bytes_;
  std::vector<std::uint32_t> edge_targets_;
  std::array<std::uint32_t, 256> root_{};
};

}  // namespace detail

// Immutable after construction; encode/decode are safe to call concurrently.
class TokenizerModel {
 public:
  TokenizerModel() : TokenizerModel(Vocabulary::byte_fallback()) {}
  explicit TokenizerModel(Vocabulary vocab) : TokenizerModel(std::move(vocab), 0) {
    base_size_ = vocab_.size();
  }
  TokenizerModel(Vocabulary vocab, std::size_t base_size)
      : vocab_(std::move(vocab)), base_size_(base_size) {
    if (base_size_ > vocab_.size()) throw ParseError("base_size exceeds vocabulary size");
    trie_.build(vocab_);
  }

  const Vocabulary& vocab() const { return vocab_; }
  std::size_t size() const { return vocab_.size(); }
  std::size_t base_size() const { return base_size_; }

  // Prepends one marker, maps each space to the marker and segments greedily by
  // longest match, falling back to single-byte tokens. Empty text encodes to
  // nothing.
  std::vector<TokenId> encode(std::string_view text) const {
    std::vector<TokenId> out;
    encode_into(text, out);
    return out;
  }

  std::size_t count(std::string_view text) const {
    std::vector<TokenId> scratch;
    encode_into(text, scratch);
    return scratch.size();
  }

  std::string decode(std::span<const TokenId> ids) const {
    std::string raw;
    for (const TokenId id : ids) {
      if (id >= vocab_.size()) {
        throw Error("token id " + std::to_string(id) + " out of range (vocabulary size " +
                    std::to_string(vocab_.size()) + ")");
      }
      if (vocab_.is_special(id)) continue;
      if (vocab_.is_byte(id)) {
        raw.push_back(static_cast<char>(id - vocab_.byte_begin()));
      } else {
        raw += vocab_.piece(id);
      }
    }
    if (const auto bad = utf8::first_invalid(raw)) {
      throw Error("decoded bytes are not valid UTF-8 at offset " + std::to_string(*bad));
    }
    std::string_view view = raw;
    if (view.starts_with(utf8::kWordMarker)) view.remove_prefix(utf8::kWordMarker.size());
    std::string out;
    out.reserve(view.size());
    std::size_t pos = 0;
    while (pos < view.size()) {
      if (view.substr(pos).starts_with(utf8::kWordMarker)) {
        out.push_back(' ');
        pos += utf8::kWordMarker.size();
      } else {
        out.push_back(view[pos++]);
      }
    }
    return out;
  }

 private:
  void encode_into(std::string_view text, std::vector<TokenId>& out) const {
    out.clear();
    if (text.empty()) return;
    if (text.find(utf8::kWordMarker) != std::string_view::npos) {
      throw Error("reserved marker in input");
    }
    std::string norm;
    norm.reserve(text.size() + 3 * (1 + text.size() / 4));
    norm += utf8::kWordMarker;
    for (const char c : text) {
      if (c == ' ') {
        norm += utf8::kWordMarker;
      } else {
        norm.push_back(c);
      }
    }
    std::string_view rest = norm;
    while (!rest.empty()) {
      if (const auto hit = trie_.longest_prefix(rest)) {
        out.push_back(hit->first);
        rest.remove_prefix(hit->second);
      } else {
        out.push_back(vocab_.byte_id(static_cast<std::uint8_t>(rest[0])));
        rest.remove_prefix(1);
      }
    }
  }

  Vocabulary vocab_;
  std::size_t base_size_ = 0;
  detail::PieceTrie trie_;
};

// Appends extension pieces not already in `base` after the base ids.
inline TokenizerModel merge(const Vocabulary& base, const ExtensionVocab& ext) {
  std::vector<std::string> pieces = base.pieces();
  std::unordered_set<std::string> seen(pieces.begin(), pieces.end());
  for (const auto& p : ext.pieces) {
    if (p.empty()) continue;
    if (seen.insert(p).second) pieces.push_back(p);
  }
  return TokenizerModel(Vocabulary::from_pieces(std::move(pieces), base.special()), base.size());
}

struct TrainOptions {
  std::size_t target_size = 19008;
  std::uint64_t min_pair_freq = 2;
  // Reject merges whose piece, ignoring word markers, is pure ASCII.
  bool skip_ascii = true;
};

namespace detail {

inline bool ascii_apart_from_markers(std::string_view piece) {
  std::size_t pos = 0;
  while (pos < piece.size()) {
    if (piece.substr(pos).starts_with(utf8::kWordMarker)) {
      pos += utf8::kWordMarker.size();
      continue;
    }
    if (static_cast<unsigned char>(piece[pos]) >= 0x80) return false;
    ++pos;
  }
  return true;
}

// Word -> frequency, each word prefixed with the marker. Splits on Unicode
// whitespace and on literal markers.
inline std::unordered_map<std::string, std::uint64_t> count_words(
    std::span<const std::string_view> texts) {
  std::unordered_map<std::string, std::uint64_t> words;
  for (const auto text : texts) {
    std::string cur;
    auto flush = [&] {
      if (!cur.empty()) {
        ++words[std::string(utf8::kWordMarker) + cur];
        cur.clear();
      }
    };
    utf8::for_each_codepoint(text, [&](char32_t cp, std::size_t off, std::size_t len) {
      if (utf8::is_whitespace(cp) || cp == 0x2581) {
        flush();
      } else {
        cur.append(text.substr(off, len));
      }
    });
    flush();
  }
  return words;
}

class PairMerger {
 public:
  PairMerger(const std::unordered_map<std::string, std::uint64_t>& word_counts,
             const TrainOptions& opts)
      : opts_(opts), heap_(HeapOrder{&symbols_}) {
    for (int b = 0; b < 256; ++b) add_symbol(std::string(1, static_cast<char>(b)));
    marker_ = add_symbol(std::string(utf8::kWordMarker));

    std::vector<std::pair<std::string, std::uint64_t>> sorted(word_counts.begin(), word_counts.end());
    std::sort(sorted.begin(), sorted.end());
    words_.reserve(sorted.size());
    for (const auto& [word, freq] : sorted) {
      Word w;
      w.freq = freq;
      std::string_view rest = word;
      while (!rest.empty()) {
        if (rest.starts_with(utf8::kWordMarker)) {
          w.symbols.push_back(marker_);
          rest.remove_prefix(utf8::kWordMarker.size());
        } else {
          w.symbols.push_back(static_cast<std::uint8_t>(rest[0]));
          rest.remove_prefix(1);
        }
      }
      words_.push_back(std::move(w));
    }
    for (std::uint32_t wi = 0; wi < words_.size(); ++wi) {
      const auto& w = words_[wi];
      for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
        const auto key = pair_key(w.symbols[i], w.symbols[i + 1]);
        counts_[key] += static_cast<std::int64_t>(w.freq);
        where_[key].push_back(wi);
      }
    }
    for (const auto& [key, c] : counts_) heap_.push({c, key});
  }

  std::vector<std::string> run() {
    std::vector<std::string> learned;
    std::unordered_set<std::string> learned_set;
    std::vector<std::uint32_t> visited_stamp(words_.size(), 0);
    std::uint32_t stamp = 0;
    while (learned.size() < opts_.target_size && !heap_.empty()) {
      const HeapEntry top = heap_.top();
      heap_.pop();
      const auto it = counts_.find(top.key);
      if (it == counts_.end() || it->second != top.count) continue;
      if (banned_.contains(top.key)) continue;
      if (top.count < static_cast<std::int64_t>(opts_.min_pair_freq) || top.count <= 0) break;

      const auto left = static_cast<std::uint32_t>(top.key >> 32);
      const auto right = static_cast<std::uint32_t>(top.key & 0xFFFFFFFFu);
      std::string merged = symbols_[left] + symbols_[right];
      if (opts_.skip_ascii && ascii_apart_from_markers(merged)) {
        banned_.insert(top.key);
        continue;
      }
      std::uint32_t target;
      if (const auto found = symbol_ids_.find(merged); found != symbol_ids_.end()) {
        target = found->second;
      } else {
        target = add_symbol(merged);
      }
      if (learned_set.insert(merged).second) learned.push_back(merged);

      ++stamp;
      std::unordered_map<std::uint64_t, std::int64_t> delta;
      const auto occurrences = std::move(where_[top.key]);
      where_.erase(top.key);
      for (const auto wi : occurrences) {
        if (visited_stamp[wi] == stamp) continue;
        visited_stamp[wi] = stamp;
        apply_merge(wi, left, right, target, delta);
      }
      for (const auto& [key, d] : delta) {
        if (d == 0) continue;
        auto& c = counts_[key];
        c += d;
        if (c <= 0) {
          counts_.erase(key);
        } else {
          heap_.push({c, key});
        }
      }
    }
    return learned;
  }

 private:
  struct Word {
    std::vector<std::uint32_t> symbols;
    std::uint64_t freq = 0;
  };

  struct HeapEntry {
    std::int64_t count;
    std::uint64_t key;
  };

  // Max-heap on count; ties go to the lexicographically smallest
  // (left, right) byte strings.
  struct HeapOrder {
    const std::vector<std::string>* symbols;
    bool operator()(const HeapEntry& a, const HeapEntry& b) const {
      if (a.count != b.count) return a.count < b.count;
      const auto& al = (*symbols)[a.key >> 32];
      const auto& bl = (*symbols)[b.key >> 32];
      if (al != bl) return bl < al;
      const auto& ar = (*symbols)[a.key & 0xFFFFFFFFu];
      const auto& br = (*symbols)[b.key & 0xFFFFFFFFu];
      return br < ar;
    }
  };

  static std::uint64_t pair_key(std::uint32_t a, std::uint32_t b) {
    return (static_cast<std::uint64_t>(a) << 32) | b;
  }

  std::uint32_t add_symbol(std::string s) {
    const auto id = static_cast<std::uint32_t>(symbols_.size());
    symbol_ids_.emplace(s, id);
    symbols_.push_back(std::move(s));
    return id;
  }

  void apply_merge(std::uint32_t wi, std::uint32_t left, std::uint32_t right, std::uint32_t target,
                   std::unordered_map<std::uint64_t, std::int64_t>& delta) {
    auto& w = words_[wi];
    const auto f = static_cast<std::int64_t>(w.freq);
    bool present = false;
    for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
      if (w.symbols[i] == left && w.symbols[i + 1] == right) {
        present = true;
        break;
      }
    }
    if (!present) return;
    for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
      delta[pair_key(w.symbols[i], w.symbols[i + 1])] -= f;
    }
    std::vector<std::uint32_t> next;
    next.reserve(w.symbols.size());
    for (std::size_t i = 0; i < w.symbols.size();) {
      if (i + 1 < w.symbols.size() && w.symbols[i] == left && w.symbols[i + 1] == right) {
        next.push_back(target);
        i += 2;
      } else {
        next.push_back(w.symbols[i]);
        ++i;
      }
    }
    w.symbols = std::move(next);
    for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
      const auto key = pair_key(w.symbols[i], w.symbols[i + 1]);
      delta[key] += f;
      where_[key].push_back(wi);
    }
  }

  TrainOptions opts_;
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, std::uint32_t> symbol_ids_;
  std::uint32_t marker_ = 0;
  std::vector<Word> words_;
  std::unordered_map<std::uint64_t, std::int64_t> counts_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> where_;
  std::unordered_set<std::uint64_t> banned_;
  std::priority_queue<HeapEntry, std::vector<HeapEntry>, HeapOrder> heap_;
};

}  // namespace detail

// Byte-level pair-merge training over whitespace-split, marker-prefixed words.
// The marker is one atomic starting symbol; every other starting symbol is a
// byte. Pieces are returned in the order they were learned.
inline ExtensionVocab train_extension(std::span<const std::string_view> texts,
                                      const TrainOptions& opts) {
  if (texts.empty()) throw Error("cannot train on an empty corpus");
  if (opts.target_size == 0) throw Error("target_size must be at least 1");
  const auto words = detail::count_words(texts);
  detail::PairMerger merger(words, opts);
  return ExtensionVocab{merger.run()};
}

inline ExtensionVocab train_extension(std::span<const Document> corpus, const TrainOptions& opts) {
  std::vector<std::string_view> texts;
  texts.reserve(corpus.size());
  for (const auto& d : corpus) texts.push_back(d.text);
  return train_extension(std::span<const std::string_view>(texts), opts);
}

struct CompressionReport {
  std::uint64_t tokens_a = 0;
  std::uint64_t tokens_b = 0;
  std::uint64_t chars = 0;
  double tokens_per_char_a = 0.0;
  double tokens_per_char_b = 0.0;
  double ratio = 0.0;  // tokens_a / tokens_b
};

inline CompressionReport compression_report(const TokenizerModel& a, const TokenizerModel& b,
                                            std::span<const Document> corpus) {
  if (corpus.empty()) throw Error("compression report needs a nonempty corpus");
  CompressionReport r;
  for (const auto& d : corpus) {
    r.tokens_a += a.count(d.text);
    r.tokens_b += b.count(d.text);
    r.chars += utf8::codepoint_count(d.text);
  }
  if (r.tokens_b == 0) throw Error("second tokenizer produced zero tokens");
  if (r.chars > 0) {
    r.tokens_per_char_a = static_cast<double>(r.tokens_a) / static_cast<double>(r.chars);
    r.tokens_per_char_b = static_cast<double>(r.tokens_b) / static_cast<double>(r.chars);
  }
  r.ratio = static_cast<double>(r.tokens_a) / static_cast<double>(r.tokens_b);
  return r;
}

inline json compression_to_json(const CompressionReport& r) {
  return json{{"tokens_a", r.tokens_a},
              {"tokens_b", r.tokens_b},
              {"chars", r.chars},
              {"tokens_per_char_a", r.tokens_per_char_a},
              {"tokens_per_char_b", r.tokens_per_char_b},
              {"ratio", r.ratio}};
}

// Vocabulary file: {"pieces": [...], "base_size": N, "special": {unk, bos, eos}}.
inline json model_to_json(const TokenizerModel& model) {
  json pieces = json::array();
  for (const auto& p : model.vocab().pieces()) pieces.push_back(piece_to_json(p));
  const auto& s = model.vocab().special();
  return json{{"pieces", std::move(pieces)},
              {"base_size", model.base_size()},
              {"special", {{"unk", s.unk}, {"bos", s.bos}, {"eos", s.eos}}}};
}

inline TokenizerModel model_from_json(const json& j) {
  if (!j.is_object() || !j.contains("pieces") || !j["pieces"].is_array()) {
    throw ParseError("vocabulary file: missing field pieces");
  }
  std::vector<std::string> pieces;
  pieces.reserve(j["pieces"].size());
  for (const auto& p : j["pieces"]) pieces.push_back(piece_from_json(p));
  SpecialIds special;
  if (j.contains("special")) {
    const auto& s = j["special"];
    special.unk = s.value("unk", special.unk);
    special.bos = s.value("bos", special.bos);
    special.eos = s.value("eos", special.eos);
  }
  const auto n = pieces.size();
  const std::size_t base_size = j.value("base_size", n);
  return TokenizerModel(Vocabulary::from_pieces(std::move(pieces), special), base_size);
}

inline json extension_to_json(const ExtensionVocab& ext) {
  json pieces = json::array();
  for (const auto& p : ext.pieces) pieces.push_back(piece_to_json(p));
  return json{{"pieces", std::move(pieces)}};
}

inline ExtensionVocab extension_from_json(const json& j) {
  if (!j.is_object() || !j.contains("pieces") || !j["pieces"].is_array()) {
    throw ParseError("extension file: missing field pieces");
  }
  ExtensionVocab ext;
  for (const auto& p : j["pieces"]) ext.pieces.push_back(piece_from_json(p));
  ext.validate();
  return ext;
}

inline TokenizerModel load_model(const std::filesystem::path& path) {
  try {
    return model_from_json(json::parse(jsonl::read_file(path)));
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void save_model(const std::filesystem::path& path, const TokenizerModel& model) {
  jsonl::write_file(path, model_to_json(model).dump(1, ' ', false) + "\n");
}

inline ExtensionVocab load_extension(const std::filesystem::path& path) {
  try {
    return extension_from_json(json::parse(jsonl::read_file(path)));
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void save_extension(const std::filesystem::path& path, const ExtensionVocab& ext) {
  jsonl::write_file(path, extension_to_json(ext).dump(1, ' ', false) + "\n");
}

}  // namespace lowres::tokenizer
