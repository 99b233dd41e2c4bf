#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace lowres::utf8 {

// U+2581 LOWER ONE EIGHTH BLOCK, the word-boundary marker.
inline constexpr std::string_view kWordMarker = "\xE2\x96\x81";

struct Decoded {
  char32_t codepoint;
  std::size_t length;
};

// Decodes one scalar value at `pos`. Rejects overlong forms, surrogates and
// values above U+10FFFF.
inline std::optional<Decoded> decode_at(std::string_view s, std::size_t pos) {
  if (pos >= s.size()) return std::nullopt;
  const auto b0 = static_cast<unsigned char>(s[pos]);
  if (b0 < 0x80) return Decoded{b0, 1};
  std::size_t len = 0;
  char32_t cp = 0;
  char32_t min = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
    min = 0x80;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
    min = 0x800;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
    min = 0x10000;
  } else {
    return std::nullopt;
  }
  if (pos + len > s.size()) return std::nullopt;
  for (std::size_t i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(s[pos + i]);
    if ((b & 0xC0) != 0x80) return std::nullopt;
    cp = (cp << 6) | (b & 0x3F);
  }
  if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return std::nullopt;
  return Decoded{cp, len};
}

// Byte offset of the first invalid sequence, or nullopt when `s` is valid.
inline std::optional<std::size_t> first_invalid(std::string_view s) {
  std::size_t pos = 0;
  while (pos < s.size()) {
    const auto d = decode_at(s, pos);
    if (!d) return pos;
    pos += d->length;
  }
  return std::nullopt;
}

inline bool is_valid(std::string_view s) { return !first_invalid(s).has_value(); }

inline void append(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline std::string encode(char32_t cp) {
  std::string out;
  append(out, cp);
  return out;
}

// Unicode White_Space property.
inline constexpr bool is_whitespace(char32_t cp) {
  return (cp >= 0x09 && cp <= 0x0D) || cp == 0x20 || cp == 0x85 || cp == 0xA0 ||
         cp == 0x1680 || (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 || cp == 0x2029 ||
         cp == 0x202F || cp == 0x205F || cp == 0x3000;
}

// Ethiopic, Ethiopic Supplement, Ethiopic Extended and Ethiopic Extended-A.
inline constexpr bool is_ethiopic(char32_t cp) {
  return (cp >= 0x1200 && cp <= 0x137F) || (cp >= 0x1380 && cp <= 0x139F) ||
         (cp >= 0x2D80 && cp <= 0x2DDF) || (cp >= 0xAB00 && cp <= 0xAB2F);
}

// Calls fn(codepoint, byte_offset, byte_length) for every scalar value.
// Input must be valid UTF-8; invalid bytes are reported as U+FFFD of length 1.
template <class Fn>
void for_each_codepoint(std::string_view s, Fn&& fn) {
  std::size_t pos = 0;
  while (pos < s.size()) {
    const auto d = decode_at(s, pos);
    if (d) {
      fn(d->codepoint, pos, d->length);
      pos += d->length;
    } else {
      fn(char32_t{0xFFFD}, pos, std::size_t{1});
      ++pos;
    }
  }
}

inline std::size_t codepoint_count(std::string_view s) {
  std::size_t n = 0;
  for_each_codepoint(s, [&](char32_t, std::size_t, std::size_t) { ++n; });
  return n;
}

inline bool is_ascii(std::string_view s) {
  for (const char c : s) {
    if (static_cast<unsigned char>(c) >= 0x80) return false;
  }
  return true;
}

}  // namespace lowres::utf8
