#pragma once

#include <string>
#include <string_view>

#include "json.hpp"

namespace lowres {

// Open source-tag enum. The three named kinds are the pretraining mixture rows;
// anything else is carried as other:<label>.
class SourceTag {
 public:
  enum class Kind { kReal, kTranslatedWikipedia, kTranslatedBooks, kOther };

  SourceTag() = default;
  static SourceTag real() { return SourceTag(Kind::kReal, {}); }
  static SourceTag translated_wikipedia() { return SourceTag(Kind::kTranslatedWikipedia, {}); }
  static SourceTag translated_books() { return SourceTag(Kind::kTranslatedBooks, {}); }
  static SourceTag other(std::string label) { return SourceTag(Kind::kOther, std::move(label)); }

  // Bare unknown strings are treated as other:<string>.
  static SourceTag parse(std::string_view s) {
    if (s == "real") return real();
    if (s == "translated_wikipedia") return translated_wikipedia();
    if (s == "translated_books") return translated_books();
    if (s.starts_with("other:")) return other(std::string(s.substr(6)));
    return other(std::string(s));
  }

  Kind kind() const { return kind_; }
  const std::string& label() const { return label_; }

  std::string str() const {
    switch (kind_) {
      case Kind::kReal: return "real";
      case Kind::kTranslatedWikipedia: return "translated_wikipedia";
      case Kind::kTranslatedBooks: return "translated_books";
      case Kind::kOther: break;
    }
    return "other:" + label_;
  }

  friend bool operator==(const SourceTag&, const SourceTag&) = default;

 private:
  SourceTag(Kind kind, std::string label) : kind_(kind), label_(std::move(label)) {}

  Kind kind_ = Kind::kOther;
  std::string label_;
};

struct Document {
  std::string id;
  SourceTag source;
  std::string text;
  nlohmann::json meta;  // null when absent, otherwise an object

  friend bool operator==(const Document&, const Document&) = default;
};

}  // namespace lowres
