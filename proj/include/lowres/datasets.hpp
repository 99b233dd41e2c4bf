#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lowres/corpus.hpp"
#include "lowres/document.hpp"
#include "lowres/error.hpp"
#include "lowres/jsonl.hpp"
#include "lowres/tokenizer.hpp"
#include "lowres/translate.hpp"

namespace lowres::datasets {

using json = nlohmann::json;

// A record that survived a translation step, or why it did not.
template <class T>
struct Outcome {
  std::optional<T> value;
  std::string reason;

  explicit operator bool() const { return value.has_value(); }
};

// ---------------------------------------------------------------------------
// Instruction pairs

class Origin {
 public:
  enum class Kind { kAlpaca, kDolly, kOpenAssistant, kSyntheticMixed, kSyntheticTranslation, kOther };

  Origin() = default;
  explicit Origin(Kind kind, std::string label = {}) : kind_(kind), label_(std::move(label)) {}

  static Origin parse(std::string_view s) {
    if (s == "alpaca") return Origin(Kind::kAlpaca);
    if (s == "dolly") return Origin(Kind::kDolly);
    if (s == "openassistant") return Origin(Kind::kOpenAssistant);
    if (s == "synthetic_mixed") return Origin(Kind::kSyntheticMixed);
    if (s == "synthetic_translation") return Origin(Kind::kSyntheticTranslation);
    if (s.starts_with("other:")) return Origin(Kind::kOther, std::string(s.substr(6)));
    throw ParseError("unknown origin: " + std::string(s));
  }

  Kind kind() const { return kind_; }

  std::string str() const {
    switch (kind_) {
      case Kind::kAlpaca: return "alpaca";
      case Kind::kDolly: return "dolly";
      case Kind::kOpenAssistant: return "openassistant";
      case Kind::kSyntheticMixed: return "synthetic_mixed";
      case Kind::kSyntheticTranslation: return "synthetic_translation";
      case Kind::kOther: break;
    }
    return "other:" + label_;
  }

  friend bool operator==(const Origin&, const Origin&) = default;

 private:
  Kind kind_ = Kind::kOther;
  std::string label_;
};

struct InstructionPair {
  std::string id;  // provenance key shared by a record and its translations
  std::string instruction;
  std::optional<std::string> input;
  std::string output;
  std::string lang_human;
  std::string lang_ai;
  Origin origin;

  void validate() const {
    if (instruction.empty()) throw ParseError("instruction pair " + id + ": empty instruction");
    if (output.empty()) throw ParseError("instruction pair " + id + ": empty output");
    if (lang_human.empty() || lang_ai.empty()) throw ParseError("instruction pair " + id + ": empty language code");
  }

  friend bool operator==(const InstructionPair&, const InstructionPair&) = default;
};

inline json pair_to_json(const InstructionPair& p) {
  json j{{"instruction", p.instruction},
         {"output", p.output},
         {"lang_human", p.lang_human},
         {"lang_ai", p.lang_ai},
         {"origin", p.origin.str()}};
  if (!p.id.empty()) j["id"] = p.id;
  if (p.input) j["input"] = *p.input;
  return j;
}

inline InstructionPair pair_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("instruction pair must be an object");
  auto str = [&](const char* k) {
    if (!j.contains(k) || !j[k].is_string()) throw ParseError(std::string("missing field ") + k);
    return j[k].get<std::string>();
  };
  InstructionPair p;
  p.id = j.contains("id") ? j["id"].get<std::string>() : std::string();
  p.instruction = str("instruction");
  if (j.contains("input") && !j["input"].is_null()) p.input = j["input"].get<std::string>();
  p.output = str("output");
  p.lang_human = str("lang_human");
  p.lang_ai = str("lang_ai");
  p.origin = Origin::parse(str("origin"));
  p.validate();
  return p;
}

// Display names used inside directives; unknown codes are used verbatim.
inline std::string language_name(std::string_view code) {
  static const std::map<std::string, std::string, std::less<>> kNames = {
      {"amh", "Amharic"}, {"am", "Amharic"}, {"eng", "English"}, {"en", "English"}};
  const auto it = kNames.find(code);
  return it == kNames.end() ? std::string(code) : it->second;
}

// A string with {name} placeholders, validated when constructed.
class Template {
 public:
  Template(std::string text, std::initializer_list<std::string_view> required) : text_(std::move(text)) {
    std::size_t pos = 0;
    while ((pos = text_.find('{', pos)) != std::string::npos) {
      const auto close = text_.find('}', pos);
      if (close == std::string::npos) throw ConfigError("template has an unterminated placeholder: " + text_);
      names_.push_back(text_.substr(pos + 1, close - pos - 1));
      pos = close + 1;
    }
    for (const auto r : required) {
      if (std::find(names_.begin(), names_.end(), r) == names_.end()) {
        throw ConfigError("template is missing placeholder {" + std::string(r) + "}: " + text_);
      }
    }
    for (const auto& n : names_) {
      if (std::find(required.begin(), required.end(), n) == required.end()) {
        throw ConfigError("template has unknown placeholder {" + n + "}: " + text_);
      }
    }
  }

  std::string render(const std::map<std::string, std::string, std::less<>>& values) const {
    std::string out;
    std::size_t pos = 0;
    while (pos < text_.size()) {
      const auto open = text_.find('{', pos);
      if (open == std::string::npos) {
        out.append(text_, pos);
        break;
      }
      out.append(text_, pos, open - pos);
      const auto close = text_.find('}', open);
      out += values.at(text_.substr(open + 1, close - open - 1));
      pos = close + 1;
    }
    return out;
  }

  const std::string& text() const { return text_; }

 private:
  std::string text_;
  std::vector<std::string> names_;
};

inline constexpr std::string_view kDefaultDirective = "Respond in {language}.";
inline constexpr std::string_view kDefaultTranslationTask = "Translate the following text to {language}:\n{text}";

struct SftTemplates {
  Template directive{std::string(kDefaultDirective), {"language"}};
  Template translation_task{std::string(kDefaultTranslationTask), {"language", "text"}};

  static SftTemplates load(std::string directive, std::string translation_task) {
    return SftTemplates{Template(std::move(directive), {"language"}),
                        Template(std::move(translation_task), {"language", "text"})};
  }
};

// Translates instruction, input and output of every pair in one pipeline run.
// A pair with any untranslated sentence is rejected whole.
inline std::vector<Outcome<InstructionPair>> translate_instruction_pairs(
    std::span<const InstructionPair> pairs, translate::TranslationBackend& backend,
    const translate::PipelineOptions& opts) {
  std::vector<std::string> texts;
  for (const auto& p : pairs) {
    p.validate();
    texts.push_back(p.instruction);
    texts.push_back(p.input.value_or(std::string()));
    texts.push_back(p.output);
  }
  const auto tr = translate::translate_texts(texts, backend, opts);
  std::vector<Outcome<InstructionPair>> out(pairs.size());
  const char* fields[] = {"instruction", "input", "output"};
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    std::string reason;
    for (std::size_t f = 0; f < 3; ++f) {
      if (!tr[3 * i + f].ok && reason.empty()) reason = std::string(fields[f]) + ": " + tr[3 * i + f].reason;
    }
    if (!reason.empty()) {
      out[i].reason = reason;
      continue;
    }
    InstructionPair t = pairs[i];
    t.instruction = tr[3 * i].text;
    if (t.input) t.input = tr[3 * i + 1].text;
    t.output = tr[3 * i + 2].text;
    t.lang_human = opts.run.target_lang;
    t.lang_ai = opts.run.target_lang;
    if (t.instruction.empty() || t.output.empty()) {
      out[i].reason = "translation produced an empty field";
      continue;
    }
    out[i].value = std::move(t);
  }
  return out;
}

inline Outcome<InstructionPair> translate_instruction_pair(const InstructionPair& pair,
                                                           translate::TranslationBackend& backend,
                                                           const translate::PipelineOptions& opts) {
  return std::move(translate_instruction_pairs(std::span(&pair, 1), backend, opts).front());
}

namespace detail {

inline void check_provenance(const InstructionPair& src, const InstructionPair& tgt) {
  if (src.id != tgt.id) throw Error("mismatched provenance: ids " + src.id + " and " + tgt.id);
  if (src.origin != tgt.origin) throw Error("mismatched provenance for " + src.id + ": origins differ");
  if (src.input.has_value() != tgt.input.has_value()) {
    throw Error("mismatched provenance for " + src.id + ": input present on one side only");
  }
  if (src.lang_ai == tgt.lang_ai) throw Error("mismatched provenance for " + src.id + ": same language on both sides");
}

}  // namespace detail

enum class Side { kHuman, kAi };

// side=human keeps the source-language prompt and the target-language answer;
// side=ai the reverse. The directive names the answer language.
inline InstructionPair mixed_language_variant(const InstructionPair& src, const InstructionPair& tgt, Side side,
                                              const SftTemplates& templates = {}) {
  detail::check_provenance(src, tgt);
  const InstructionPair& prompt = side == Side::kHuman ? src : tgt;
  const InstructionPair& answer = side == Side::kHuman ? tgt : src;
  InstructionPair p;
  p.id = src.id + (side == Side::kHuman ? "#mixed-human" : "#mixed-ai");
  p.instruction = prompt.instruction + "\n" + templates.directive.render({{"language", language_name(answer.lang_ai)}});
  p.input = prompt.input;
  p.output = answer.output;
  p.lang_human = prompt.lang_human;
  p.lang_ai = answer.lang_ai;
  p.origin = Origin(Origin::Kind::kSyntheticMixed);
  return p;
}

enum class TaskSide { kInstruction, kOutput };
enum class Direction { kSourceToTarget, kTargetToSource };

inline InstructionPair translation_task_pair(const InstructionPair& src, const InstructionPair& tgt, TaskSide side,
                                             Direction direction, const SftTemplates& templates = {}) {
  detail::check_provenance(src, tgt);
  const InstructionPair& from = direction == Direction::kSourceToTarget ? src : tgt;
  const InstructionPair& to = direction == Direction::kSourceToTarget ? tgt : src;
  const bool instr = side == TaskSide::kInstruction;
  const std::string& text_from = instr ? from.instruction : from.output;
  const std::string& text_to = instr ? to.instruction : to.output;
  if (text_from.empty() || text_to.empty()) throw Error("translation task for " + src.id + ": selected side is empty");
  const std::string& from_lang = instr ? from.lang_human : from.lang_ai;
  const std::string& to_lang = instr ? to.lang_human : to.lang_ai;
  InstructionPair p;
  p.id = src.id + "#translate-" + (instr ? "instruction" : "output") +
         (direction == Direction::kSourceToTarget ? "-forward" : "-backward");
  p.instruction = templates.translation_task.render({{"language", language_name(to_lang)}, {"text", text_from}});
  p.output = text_to;
  p.lang_human = from_lang;
  p.lang_ai = to_lang;
  p.origin = Origin(Origin::Kind::kSyntheticTranslation);
  return p;
}

// ---------------------------------------------------------------------------
// Conversation trees

enum class Role { kPrompter, kAssistant };

inline std::string_view role_name(Role r) { return r == Role::kPrompter ? "prompter" : "assistant"; }

inline Role parse_role(std::string_view s) {
  if (s == "prompter") return Role::kPrompter;
  if (s == "assistant") return Role::kAssistant;
  throw ParseError("unknown role: " + std::string(s));
}

struct ConversationNode {
  std::string id;
  Role role = Role::kPrompter;
  std::string text;
  std::optional<int> rank;  // 0 is best
  std::vector<ConversationNode> children;
};

// Accepts {id, role, text, rank, children} and the message_id/replies spelling.
inline ConversationNode tree_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("conversation node must be an object");
  ConversationNode n;
  if (j.contains("id")) {
    n.id = j["id"].get<std::string>();
  } else if (j.contains("message_id")) {
    n.id = j["message_id"].get<std::string>();
  } else {
    throw ParseError("conversation node: missing field id");
  }
  if (!j.contains("role")) throw ParseError("conversation node " + n.id + ": missing field role");
  n.role = parse_role(j["role"].get<std::string>());
  n.text = j.value("text", std::string());
  if (j.contains("rank") && !j["rank"].is_null()) n.rank = j["rank"].get<int>();
  const char* kids = j.contains("children") ? "children" : (j.contains("replies") ? "replies" : nullptr);
  if (kids) {
    for (const auto& c : j[kids]) n.children.push_back(tree_from_json(c));
  }
  return n;
}

inline json tree_to_json(const ConversationNode& n) {
  json kids = json::array();
  for (const auto& c : n.children) kids.push_back(tree_to_json(c));
  json j{{"id", n.id}, {"role", role_name(n.role)}, {"text", n.text}, {"children", std::move(kids)}};
  j["rank"] = n.rank ? json(*n.rank) : json(nullptr);
  return j;
}

struct Turn {
  Role role;
  std::string text;

  friend bool operator==(const Turn&, const Turn&) = default;
};

struct Thread {
  std::vector<Turn> turns;

  friend bool operator==(const Thread&, const Thread&) = default;
};

struct PrunePolicy {
  int max_rank = 0;
};

namespace detail {

inline void check_alternation(const ConversationNode& n, std::optional<Role> parent) {
  const Role expected = parent ? (*parent == Role::kPrompter ? Role::kAssistant : Role::kPrompter) : Role::kPrompter;
  if (n.role != expected) {
    throw Error("role alternation broken at node " + n.id + ": expected " + std::string(role_name(expected)) +
                ", found " + std::string(role_name(n.role)));
  }
  for (const auto& c : n.children) check_alternation(c, n.role);
}

inline bool collect_threads(const ConversationNode& n, const PrunePolicy& policy, std::vector<const ConversationNode*>& path,
                            std::vector<Thread>& out) {
  path.push_back(&n);
  bool emitted_below = false;
  for (const auto& c : n.children) {
    if (c.role == Role::kAssistant && !(c.rank && *c.rank <= policy.max_rank)) continue;
    emitted_below |= collect_threads(c, policy, path, out);
  }
  if (!emitted_below && n.role == Role::kAssistant) {
    Thread t;
    for (const auto* p : path) t.turns.push_back(Turn{p->role, p->text});
    out.push_back(std::move(t));
    emitted_below = true;
  }
  path.pop_back();
  return emitted_below;
}

}  // namespace detail

// Drops assistant replies ranked worse than max_rank (or unranked) and emits one
// thread per surviving assistant turn that has no surviving assistant below it,
// in pre-order.
inline std::vector<Thread> prune_oa_tree(const ConversationNode& root, const PrunePolicy& policy = {}) {
  detail::check_alternation(root, std::nullopt);
  std::vector<Thread> out;
  std::vector<const ConversationNode*> path;
  detail::collect_threads(root, policy, path, out);
  return out;
}

inline json thread_to_json(const Thread& t) {
  json turns = json::array();
  for (const auto& turn : t.turns) turns.push_back({{"role", role_name(turn.role)}, {"text", turn.text}});
  return json{{"turns", std::move(turns)}};
}

inline Thread thread_from_json(const json& j) {
  Thread t;
  for (const auto& turn : j.at("turns")) {
    t.turns.push_back(Turn{parse_role(turn.at("role").get<std::string>()), turn.at("text").get<std::string>()});
  }
  return t;
}

// Single prior turn -> its text; longer histories get "User:"/"Assistant:" prefixes.
inline InstructionPair thread_to_pair(const Thread& t, const std::string& lang, const std::string& id = {}) {
  if (t.turns.size() < 2 || t.turns.back().role != Role::kAssistant) {
    throw Error("thread must end with an assistant turn after at least one prompt");
  }
  InstructionPair p;
  p.id = id;
  if (t.turns.size() == 2) {
    p.instruction = t.turns.front().text;
  } else {
    for (std::size_t i = 0; i + 1 < t.turns.size(); ++i) {
      if (i) p.instruction += '\n';
      p.instruction += t.turns[i].role == Role::kPrompter ? "User: " : "Assistant: ";
      p.instruction += t.turns[i].text;
    }
  }
  p.output = t.turns.back().text;
  p.lang_human = lang;
  p.lang_ai = lang;
  p.origin = Origin(Origin::Kind::kOpenAssistant);
  return p;
}

// ---------------------------------------------------------------------------
// Visual instruction records

inline constexpr std::string_view kImagePlaceholder = "<image>";

struct VisualTurn {
  std::string from;  // "human" or "gpt"
  std::string value;

  friend bool operator==(const VisualTurn&, const VisualTurn&) = default;
};

struct VisualInstructionRecord {
  std::string id;
  std::string image;
  std::vector<VisualTurn> conversations;

  void validate() const {
    if (conversations.empty()) throw Error("visual record " + id + " has no conversations");
    if (conversations.front().from != "human") throw Error("visual record " + id + ": first turn must be human");
    for (const auto& t : conversations) {
      if (t.from != "human" && t.from != "gpt") throw Error("visual record " + id + ": bad speaker " + t.from);
    }
  }

  friend bool operator==(const VisualInstructionRecord&, const VisualInstructionRecord&) = default;
};

inline json visual_to_json(const VisualInstructionRecord& r) {
  json conv = json::array();
  for (const auto& t : r.conversations) conv.push_back({{"from", t.from}, {"value", t.value}});
  return json{{"id", r.id}, {"image", r.image}, {"conversations", std::move(conv)}};
}

inline VisualInstructionRecord visual_from_json(const json& j) {
  VisualInstructionRecord r;
  r.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
  r.image = j.value("image", std::string());
  for (const auto& t : j.at("conversations")) {
    r.conversations.push_back(VisualTurn{t.at("from").get<std::string>(), t.at("value").get<std::string>()});
  }
  return r;
}

inline std::size_t count_placeholders(std::string_view s) {
  std::size_t n = 0;
  for (auto pos = s.find(kImagePlaceholder); pos != std::string_view::npos;
       pos = s.find(kImagePlaceholder, pos + kImagePlaceholder.size())) {
    ++n;
  }
  return n;
}

inline std::size_t count_placeholders(const VisualInstructionRecord& r) {
  std::size_t n = 0;
  for (const auto& t : r.conversations) n += count_placeholders(t.value);
  return n;
}

namespace detail {

// Text between placeholders, in order; placeholders themselves are implied
// between consecutive segments.
inline std::vector<std::string> split_placeholders(std::string_view s) {
  std::vector<std::string> segs;
  std::size_t pos = 0;
  for (;;) {
    const auto hit = s.find(kImagePlaceholder, pos);
    if (hit == std::string_view::npos) {
      segs.emplace_back(s.substr(pos));
      return segs;
    }
    segs.emplace_back(s.substr(pos, hit - pos));
    pos = hit + kImagePlaceholder.size();
  }
}

inline bool has_content(std::string_view s) {
  bool content = false;
  utf8::for_each_codepoint(s, [&](char32_t cp, std::size_t, std::size_t) {
    if (!utf8::is_whitespace(cp)) content = true;
  });
  return content;
}

}  // namespace detail

// Translates only the text around "<image>" placeholders; placeholders, the
// whitespace next to them and the image reference are kept byte-for-byte.
inline std::vector<Outcome<VisualInstructionRecord>> translate_visual_records(
    std::span<const VisualInstructionRecord> records, translate::TranslationBackend& backend,
    const translate::PipelineOptions& opts) {
  struct Ref {
    std::size_t record, turn, segment;
  };
  std::vector<std::vector<std::vector<std::string>>> segments(records.size());
  std::vector<std::string> texts;
  std::vector<Ref> refs;
  for (std::size_t r = 0; r < records.size(); ++r) {
    records[r].validate();
    for (std::size_t t = 0; t < records[r].conversations.size(); ++t) {
      segments[r].push_back(detail::split_placeholders(records[r].conversations[t].value));
      for (std::size_t s = 0; s < segments[r][t].size(); ++s) {
        if (!detail::has_content(segments[r][t][s])) continue;
        texts.push_back(segments[r][t][s]);
        refs.push_back({r, t, s});
      }
    }
  }
  const auto tr = translate::translate_texts(texts, backend, opts);
  std::vector<std::string> reasons(records.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& ref = refs[i];
    if (!tr[i].ok) {
      if (reasons[ref.record].empty()) reasons[ref.record] = "turn " + std::to_string(ref.turn) + ": " + tr[i].reason;
      continue;
    }
    segments[ref.record][ref.turn][ref.segment] = tr[i].text;
  }
  std::vector<Outcome<VisualInstructionRecord>> out(records.size());
  for (std::size_t r = 0; r < records.size(); ++r) {
    if (!reasons[r].empty()) {
      out[r].reason = reasons[r];
      continue;
    }
    VisualInstructionRecord rec = records[r];
    for (std::size_t t = 0; t < rec.conversations.size(); ++t) {
      std::string value;
      for (std::size_t s = 0; s < segments[r][t].size(); ++s) {
        if (s) value += kImagePlaceholder;
        value += segments[r][t][s];
      }
      rec.conversations[t].value = std::move(value);
    }
    out[r].value = std::move(rec);
  }
  return out;
}

inline Outcome<VisualInstructionRecord> translate_visual_record(const VisualInstructionRecord& rec,
                                                                translate::TranslationBackend& backend,
                                                                const translate::PipelineOptions& opts) {
  return std::move(translate_visual_records(std::span(&rec, 1), backend, opts).front());
}

// ---------------------------------------------------------------------------
// SFT JSONL emitters

template <class T, class ToJson>
void emit_jsonl(const std::filesystem::path& path, std::span<const T> records, ToJson&& to_json) {
  std::string out;
  for (const auto& r : records) {
    out += jsonl::dump(to_json(r));
    out += '\n';
  }
  jsonl::write_file(path, out);
}

inline void emit_sft_jsonl(const std::filesystem::path& path, std::span<const InstructionPair> pairs) {
  emit_jsonl(path, pairs, pair_to_json);
}
inline void emit_sft_jsonl(const std::filesystem::path& path, std::span<const Thread> threads) {
  emit_jsonl(path, threads, thread_to_json);
}
inline void emit_sft_jsonl(const std::filesystem::path& path, std::span<const VisualInstructionRecord> records) {
  emit_jsonl(path, records, visual_to_json);
}

template <class T, class FromJson>
std::vector<T> read_jsonl(const std::filesystem::path& path, FromJson&& from_json) {
  std::vector<T> out;
  jsonl::for_each_line(path, [&](const json& j, std::size_t line_no) {
    try {
      out.push_back(from_json(j));
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
  });
  return out;
}

inline std::vector<InstructionPair> read_pairs(const std::filesystem::path& path) {
  return read_jsonl<InstructionPair>(path, pair_from_json);
}
inline std::vector<Thread> read_threads(const std::filesystem::path& path) {
  return read_jsonl<Thread>(path, thread_from_json);
}
inline std::vector<VisualInstructionRecord> read_visual_records(const std::filesystem::path& path) {
  return read_jsonl<VisualInstructionRecord>(path, visual_from_json);
}
inline std::vector<ConversationNode> read_trees(const std::filesystem::path& path) {
  return read_jsonl<ConversationNode>(path, tree_from_json);
}

// ---------------------------------------------------------------------------
// Pretraining mixture

struct MixtureSource {
  SourceTag tag;
  std::filesystem::path path;  // only used by the path-based overload
  double weight = 0.0;
};

struct MixtureConfig {
  std::vector<MixtureSource> sources;
  std::uint64_t total_token_budget = 0;
  std::uint64_t seed = 0;
  const tokenizer::TokenizerModel* counter = nullptr;  // byte-fallback base when null

  void validate() const {
    if (sources.empty()) throw ConfigError("mixture: no sources");
    if (total_token_budget < 1) throw ConfigError("mixture: total_token_budget must be at least 1");
    double sum = 0.0;
    for (const auto& s : sources) {
      if (!(s.weight >= 0.0)) throw ConfigError("mixture: negative weight for " + s.tag.str());
      sum += s.weight;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("mixture: weights sum to " + std::to_string(sum) + ", not 1");
  }
};

struct SourceManifest {
  std::string tag;
  std::uint64_t budget = 0;
  std::uint64_t tokens = 0;
  std::uint64_t documents = 0;
  std::uint64_t overshoot = 0;
  double proportion = 0.0;
};

struct MixtureManifest {
  std::vector<SourceManifest> sources;
  std::uint64_t total_tokens = 0;
  std::uint64_t seed = 0;
};

inline json manifest_to_json(const MixtureManifest& m) {
  json sources = json::array();
  for (const auto& s : m.sources) {
    sources.push_back({{"tag", s.tag},
                       {"budget", s.budget},
                       {"tokens", s.tokens},
                       {"documents", s.documents},
                       {"overshoot", s.overshoot},
                       {"proportion", s.proportion}});
  }
  return json{{"sources", std::move(sources)}, {"total_tokens", m.total_tokens}, {"seed", m.seed}};
}

struct MixtureResult {
  std::vector<Document> emitted;
  MixtureManifest manifest;
};

namespace detail {

// Uniform integer in [0, n) by rejection; stable across standard libraries.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

}  // namespace detail

// Each source contributes whole documents in seeded-shuffle order until its
// budget round(weight * total) is met; the last document may overshoot. Sources
// are interleaved by a seeded draw proportional to weight.
inline MixtureResult build_pretrain_mixture(const MixtureConfig& cfg, std::span<const std::vector<Document>> corpora) {
  cfg.validate();
  if (corpora.size() != cfg.sources.size()) throw ConfigError("mixture: corpus count does not match sources");
  const auto& counter = cfg.counter ? *cfg.counter : translate::default_counter();
  std::mt19937_64 rng(cfg.seed);

  MixtureResult result;
  result.manifest.seed = cfg.seed;
  std::vector<std::vector<std::size_t>> picks(cfg.sources.size());
  std::vector<std::vector<std::uint64_t>> doc_tokens(cfg.sources.size());
  for (std::size_t s = 0; s < cfg.sources.size(); ++s) {
    const auto& docs = corpora[s];
    SourceManifest sm;
    sm.tag = cfg.sources[s].tag.str();
    sm.budget = static_cast<std::uint64_t>(std::llround(cfg.sources[s].weight * static_cast<double>(cfg.total_token_budget)));
    std::uint64_t available = 0;
    doc_tokens[s].reserve(docs.size());
    for (const auto& d : docs) {
      doc_tokens[s].push_back(corpus::count_tokens(d, counter));
      available += doc_tokens[s].back();
    }
    if (available < sm.budget) {
      throw Error("mixture source " + sm.tag + " has " + std::to_string(available) + " tokens but needs " +
                  std::to_string(sm.budget) + " (shortfall " + std::to_string(sm.budget - available) + ")");
    }
    std::vector<std::size_t> order(docs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[detail::uniform_below(rng, i)]);
    }
    for (const auto i : order) {
      if (sm.tokens >= sm.budget) break;
      picks[s].push_back(i);
      sm.tokens += doc_tokens[s][i];
    }
    sm.documents = picks[s].size();
    sm.overshoot = sm.tokens - sm.budget;
    result.manifest.total_tokens += sm.tokens;
    result.manifest.sources.push_back(sm);
  }
  for (auto& sm : result.manifest.sources) {
    sm.proportion = result.manifest.total_tokens == 0
                        ? 0.0
                        : static_cast<double>(sm.tokens) / static_cast<double>(result.manifest.total_tokens);
  }

  std::vector<std::size_t> cursor(cfg.sources.size(), 0);
  for (;;) {
    double live = 0.0;
    for (std::size_t s = 0; s < cfg.sources.size(); ++s) {
      if (cursor[s] < picks[s].size()) live += cfg.sources[s].weight;
    }
    if (live <= 0.0) break;
    double r = translate::detail::unit_random(rng) * live;
    std::size_t chosen = cfg.sources.size();
    for (std::size_t s = 0; s < cfg.sources.size(); ++s) {
      if (cursor[s] >= picks[s].size()) continue;
      chosen = s;
      if (r < cfg.sources[s].weight) break;
      r -= cfg.sources[s].weight;
    }
    result.emitted.push_back(corpora[chosen][picks[chosen][cursor[chosen]++]]);
  }
  return result;
}

inline MixtureResult build_pretrain_mixture(const MixtureConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<Document>> corpora;
  for (const auto& s : cfg.sources) corpora.push_back(corpus::ingest_documents(s.path, corpus::Format::kJsonl));
  return build_pretrain_mixture(cfg, corpora);
}

}  // namespace lowres::datasets
