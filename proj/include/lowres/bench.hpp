#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lowres/error.hpp"
#include "lowres/jsonl.hpp"
#include "lowres/translate.hpp"
#include "lowres/utf8.hpp"

namespace lowres::bench {

using json = nlohmann::json;

struct MMLUItem {
  std::string subject;
  std::string question;
  std::array<std::string, 4> choices;
  int answer = 0;

  void validate() const {
    if (answer < 0 || answer > 3) throw ParseError("answer index " + std::to_string(answer) + " out of range");
    for (const auto& c : choices) {
      if (c.empty()) throw ParseError("empty choice in " + subject + " item");
    }
  }

  friend bool operator==(const MMLUItem&, const MMLUItem&) = default;
};

inline json item_to_json(const MMLUItem& it) {
  return json{{"subject", it.subject}, {"question", it.question}, {"choices", it.choices}, {"answer", it.answer}};
}

inline MMLUItem item_from_json(const json& j) {
  MMLUItem it;
  it.subject = j.at("subject").get<std::string>();
  it.question = j.at("question").get<std::string>();
  const auto& ch = j.at("choices");
  if (!ch.is_array() || ch.size() != 4) throw ParseError("choices must hold exactly 4 strings");
  for (std::size_t i = 0; i < 4; ++i) it.choices[i] = ch[i].get<std::string>();
  it.answer = j.at("answer").get<int>();
  it.validate();
  return it;
}

inline std::vector<MMLUItem> read_items(const std::filesystem::path& path) {
  std::vector<MMLUItem> items;
  jsonl::for_each_line(path, [&](const json& j, std::size_t line_no) {
    try {
      items.push_back(item_from_json(j));
    } catch (const std::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
  });
  return items;
}

inline void write_items(const std::filesystem::path& path, std::span<const MMLUItem> items) {
  std::string out;
  for (const auto& it : items) {
    out += jsonl::dump(item_to_json(it));
    out += '\n';
  }
  jsonl::write_file(path, out);
}

// The 57 standard subjects.
inline const std::vector<std::string>& mmlu_subjects() {
  static const std::vector<std::string> kSubjects = {
      "abstract_algebra", "anatomy", "astronomy", "business_ethics", "clinical_knowledge", "college_biology",
      "college_chemistry", "college_computer_science", "college_mathematics", "college_medicine",
      "college_physics", "computer_security", "conceptual_physics", "econometrics", "electrical_engineering",
      "elementary_mathematics", "formal_logic", "global_facts", "high_school_biology", "high_school_chemistry",
      "high_school_computer_science", "high_school_european_history", "high_school_geography",
      "high_school_government_and_politics", "high_school_macroeconomics", "high_school_mathematics",
      "high_school_microeconomics", "high_school_physics", "high_school_psychology", "high_school_statistics",
      "high_school_us_history", "high_school_world_history", "human_aging", "human_sexuality",
      "international_law", "jurisprudence", "logical_fallacies", "machine_learning", "management", "marketing",
      "medical_genetics", "miscellaneous", "moral_disputes", "moral_scenarios", "nutrition", "philosophy",
      "prehistory", "professional_accounting", "professional_law", "professional_medicine",
      "professional_psychology", "public_relations", "security_studies", "sociology", "us_foreign_policy",
      "virology", "world_religions"};
  return kSubjects;
}

// Standard STEM grouping plus formal_logic.
inline std::set<std::string> default_stem_subjects() {
  return {"abstract_algebra", "astronomy", "college_biology", "college_chemistry", "college_computer_science",
          "college_mathematics", "college_physics", "computer_security", "conceptual_physics",
          "electrical_engineering", "elementary_mathematics", "formal_logic", "high_school_biology",
          "high_school_chemistry", "high_school_computer_science", "high_school_mathematics",
          "high_school_physics", "high_school_statistics", "machine_learning"};
}

struct TranslatedBenchmark {
  std::vector<MMLUItem> items;
  std::vector<std::size_t> dropped;  // input indices
};

// Question and each choice are translated as independent texts; subject and
// answer are copied. Items with any failed field are dropped.
inline TranslatedBenchmark build_translated_benchmark(std::span<const MMLUItem> items,
                                                      translate::TranslationBackend& backend,
                                                      const translate::PipelineOptions& opts) {
  std::vector<std::string> texts;
  texts.reserve(items.size() * 5);
  for (const auto& it : items) {
    it.validate();
    texts.push_back(it.question);
    for (const auto& c : it.choices) texts.push_back(c);
  }
  const auto tr = translate::translate_texts(texts, backend, opts);
  TranslatedBenchmark out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    bool ok = true;
    for (std::size_t f = 0; f < 5; ++f) ok = ok && tr[5 * i + f].ok;
    MMLUItem t = items[i];
    if (ok) {
      t.question = tr[5 * i].text;
      for (std::size_t c = 0; c < 4; ++c) t.choices[c] = tr[5 * i + 1 + c].text;
      for (const auto& c : t.choices) ok = ok && !c.empty();
    }
    if (!ok) {
      out.dropped.push_back(i);
      continue;
    }
    out.items.push_back(std::move(t));
  }
  return out;
}

inline constexpr std::string_view kDefaultPromptTemplate =
    "{question}\n{label0}. {choice0}\n{label1}. {choice1}\n{label2}. {choice2}\n{label3}. {choice3}\nAnswer:";

// Prompt template with {question}, {choice0..3} and optional {label0..3}.
class PromptTemplate {
 public:
  explicit PromptTemplate(std::string text = std::string(kDefaultPromptTemplate), std::string labels = "ABCD")
      : text_(std::move(text)), labels_(std::move(labels)) {
    if (labels_.size() != 4) throw ConfigError("label alphabet must have exactly 4 letters");
    for (const char c : labels_) {
      if (!((c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z'))) throw ConfigError("labels must be ASCII letters");
    }
    static const std::set<std::string> kAllowed = {"question", "choice0", "choice1", "choice2", "choice3",
                                                   "label0",   "label1",  "label2",  "label3"};
    std::set<std::string> seen;
    std::size_t pos = 0;
    while ((pos = text_.find('{', pos)) != std::string::npos) {
      const auto close = text_.find('}', pos);
      if (close == std::string::npos) throw ConfigError("prompt template has an unterminated placeholder");
      const auto name = text_.substr(pos + 1, close - pos - 1);
      if (!kAllowed.contains(name)) throw ConfigError("prompt template has unknown placeholder {" + name + "}");
      seen.insert(name);
      pos = close + 1;
    }
    for (const char* required : {"question", "choice0", "choice1", "choice2", "choice3"}) {
      if (!seen.contains(required)) throw ConfigError(std::string("prompt template is missing {") + required + "}");
    }
  }

  const std::string& labels() const { return labels_; }

  std::string format(const MMLUItem& item) const {
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
      const auto name = text_.substr(open + 1, close - open - 1);
      if (name == "question") {
        out += item.question;
      } else if (name.starts_with("choice")) {
        out += item.choices[static_cast<std::size_t>(name.back() - '0')];
      } else {
        out.push_back(labels_[static_cast<std::size_t>(name.back() - '0')]);
      }
      pos = close + 1;
    }
    return out;
  }

 private:
  std::string text_;
  std::string labels_;
};

inline std::string format_mc_prompt(const MMLUItem& item, const PromptTemplate& tmpl = PromptTemplate()) {
  return tmpl.format(item);
}

namespace detail {

// Letters, digits and non-ASCII letters count as word characters; Ethiopic
// punctuation and general punctuation do not.
inline bool is_word_char(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') || (cp >= '0' && cp <= '9') || cp == '_';
  }
  if (utf8::is_whitespace(cp)) return false;
  if (cp >= 0x1360 && cp <= 0x1368) return false;
  if (cp >= 0x2000 && cp <= 0x206F) return false;
  if (cp >= 0x3000 && cp <= 0x303F) return false;
  if (cp >= 0x27E6 && cp <= 0x27EF) return false;
  if (cp >= 0xFF00 && cp <= 0xFF0F) return false;
  return true;
}

}  // namespace detail

// Index of the first standalone label letter (case-insensitive).
inline std::optional<int> parse_choice(std::string_view response, std::string_view labels = "ABCD") {
  std::vector<char32_t> cps;
  utf8::for_each_codepoint(response, [&](char32_t cp, std::size_t, std::size_t) { cps.push_back(cp); });
  auto upper = [](char32_t c) { return (c >= 'a' && c <= 'z') ? c - 32 : c; };
  for (std::size_t i = 0; i < cps.size(); ++i) {
    const char32_t c = upper(cps[i]);
    std::optional<int> idx;
    for (std::size_t k = 0; k < labels.size(); ++k) {
      if (upper(static_cast<unsigned char>(labels[k])) == c) {
        idx = static_cast<int>(k);
        break;
      }
    }
    if (!idx) continue;
    const bool left_ok = i == 0 || !detail::is_word_char(cps[i - 1]);
    const bool right_ok = i + 1 == cps.size() || !detail::is_word_char(cps[i + 1]);
    if (left_ok && right_ok) return idx;
  }
  return std::nullopt;
}

struct SubjectTally {
  std::uint64_t correct = 0;
  std::uint64_t total = 0;

  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
};

struct SubjectFragment {
  std::string subject;
  std::uint64_t correct = 0;
  std::uint64_t total = 0;
};

struct ScoreResult {
  std::vector<bool> correct;
  std::vector<SubjectFragment> fragments;  // one per subject, sorted by subject
};

inline ScoreResult score(std::span<const MMLUItem> items, std::span<const std::string> responses,
                         std::string_view labels = "ABCD") {
  if (items.size() != responses.size()) {
    throw Error("item/response count mismatch: " + std::to_string(items.size()) + " items, " +
                std::to_string(responses.size()) + " responses");
  }
  ScoreResult r;
  std::map<std::string, SubjectTally> tallies;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto parsed = parse_choice(responses[i], labels);
    const bool ok = parsed && *parsed == items[i].answer;
    r.correct.push_back(ok);
    auto& t = tallies[items[i].subject];
    ++t.total;
    if (ok) ++t.correct;
  }
  for (const auto& [subject, t] : tallies) r.fragments.push_back({subject, t.correct, t.total});
  return r;
}

struct EvalReport {
  std::map<std::string, SubjectTally> per_subject;
  double overall_micro = 0.0;
  double overall_macro = 0.0;
  std::optional<double> non_stem_micro;
  std::optional<double> non_stem_macro;
  std::set<std::string> stem_subjects;
  std::map<std::string, std::string> labels;

  std::uint64_t total_items() const {
    std::uint64_t n = 0;
    for (const auto& [_, t] : per_subject) n += t.total;
    return n;
  }
};

// Micro averages weight by item, macro averages subjects equally. Non-STEM
// figures are absent when no non-STEM items remain.
inline EvalReport aggregate(std::span<const SubjectFragment> fragments, const std::set<std::string>& stem_subjects,
                            std::map<std::string, std::string> labels = {}) {
  if (fragments.empty()) throw Error("aggregate needs at least one fragment");
  EvalReport rep;
  rep.stem_subjects = stem_subjects;
  rep.labels = std::move(labels);
  for (const auto& f : fragments) {
    if (f.correct > f.total) throw Error("fragment for " + f.subject + " has more correct than total");
    auto& t = rep.per_subject[f.subject];
    t.correct += f.correct;
    t.total += f.total;
  }
  std::uint64_t c = 0, n = 0, nc = 0, nn = 0;
  double macro = 0.0, ns_macro = 0.0;
  std::size_t subjects = 0, ns_subjects = 0;
  for (const auto& [subject, t] : rep.per_subject) {
    if (t.total == 0) continue;
    c += t.correct;
    n += t.total;
    macro += t.accuracy();
    ++subjects;
    if (!stem_subjects.contains(subject)) {
      nc += t.correct;
      nn += t.total;
      ns_macro += t.accuracy();
      ++ns_subjects;
    }
  }
  if (n > 0) rep.overall_micro = static_cast<double>(c) / static_cast<double>(n);
  if (subjects > 0) rep.overall_macro = macro / static_cast<double>(subjects);
  if (nn > 0) {
    rep.non_stem_micro = static_cast<double>(nc) / static_cast<double>(nn);
    rep.non_stem_macro = ns_macro / static_cast<double>(ns_subjects);
  }
  return rep;
}

inline json report_to_json(const EvalReport& r) {
  json per = json::object();
  for (const auto& [s, t] : r.per_subject) {
    per[s] = {{"correct", t.correct}, {"total", t.total}, {"accuracy", t.accuracy()}};
  }
  return json{{"per_subject", std::move(per)},
              {"overall_micro", r.overall_micro},
              {"overall_macro", r.overall_macro},
              {"non_stem_micro", r.non_stem_micro ? json(*r.non_stem_micro) : json(nullptr)},
              {"non_stem_macro", r.non_stem_macro ? json(*r.non_stem_macro) : json(nullptr)},
              {"stem_subjects", r.stem_subjects},
              {"labels", r.labels},
              {"total_items", r.total_items()}};
}

// Rebuilds a report from its JSON form by re-aggregating the per-subject counts.
inline EvalReport report_from_json(const json& j) {
  std::vector<SubjectFragment> frags;
  for (const auto& [s, t] : j.at("per_subject").items()) {
    frags.push_back({s, t.at("correct").get<std::uint64_t>(), t.at("total").get<std::uint64_t>()});
  }
  std::set<std::string> stem = j.contains("stem_subjects") ? j["stem_subjects"].get<std::set<std::string>>()
                                                           : default_stem_subjects();
  std::map<std::string, std::string> labels;
  if (j.contains("labels")) labels = j["labels"].get<std::map<std::string, std::string>>();
  return aggregate(frags, stem, std::move(labels));
}

// Shortest decimal that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string subject_csv(const EvalReport& r) {
  std::string out = "subject,correct,total,accuracy\n";
  for (const auto& [s, t] : r.per_subject) {
    out += s + "," + std::to_string(t.correct) + "," + std::to_string(t.total) + "," + format_double(t.accuracy()) + "\n";
  }
  return out;
}

// Side-by-side accuracies over the union of subjects; missing cells are blank.
inline std::string subject_csv(const EvalReport& a, const EvalReport& b) {
  std::set<std::string> subjects;
  for (const auto& [s, _] : a.per_subject) subjects.insert(s);
  for (const auto& [s, _] : b.per_subject) subjects.insert(s);
  std::string out = "subject,acc_a,acc_b\n";
  auto cell = [](const EvalReport& r, const std::string& s) {
    const auto it = r.per_subject.find(s);
    return it == r.per_subject.end() ? std::string() : format_double(it->second.accuracy());
  };
  for (const auto& s : subjects) out += s + "," + cell(a, s) + "," + cell(b, s) + "\n";
  return out;
}

inline void export_subject_csv(const EvalReport& r, const std::filesystem::path& path) {
  jsonl::write_file(path, subject_csv(r));
}

inline void export_subject_csv(const EvalReport& a, const EvalReport& b, const std::filesystem::path& path) {
  jsonl::write_file(path, subject_csv(a, b));
}

// Pretrain | Finetune | Score | Non-STEM Score, one row per report, values from
// labels "pretrain" and "finetune" and the micro averages.
inline std::string render_score_table(std::span<const EvalReport> reports) {
  auto fixed2 = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  std::vector<std::array<std::string, 4>> rows;
  rows.push_back({"Pretrain", "Finetune", "Score", "Non-STEM Score"});
  for (const auto& r : reports) {
    auto label = [&](const char* k) {
      const auto it = r.labels.find(k);
      return it == r.labels.end() ? std::string("-") : it->second;
    };
    rows.push_back({label("pretrain"), label("finetune"), fixed2(r.overall_micro),
                    r.non_stem_micro ? fixed2(*r.non_stem_micro) : std::string("n/a")});
  }
  std::array<std::size_t, 4> width{};
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < 4; ++c) width[c] = std::max(width[c], utf8::codepoint_count(row[c]));
  }
  std::string out;
  auto line = [&](const std::array<std::string, 4>& row) {
    for (std::size_t c = 0; c < 4; ++c) {
      out += "| " + row[c] + std::string(width[c] - utf8::codepoint_count(row[c]) + 1, ' ');
    }
    out += "|\n";
  };
  line(rows.front());
  for (std::size_t c = 0; c < 4; ++c) out += "|" + std::string(width[c] + 2, '-');
  out += "|\n";
  for (std::size_t i = 1; i < rows.size(); ++i) line(rows[i]);
  return out;
}

}  // namespace lowres::bench
