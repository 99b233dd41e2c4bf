#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "lowres/error.hpp"

namespace lowres::translate {

using json = nlohmann::json;

// One call translates one batch. Implementations throw BackendError on any
// retryable failure and must be safe to call from several threads at once.
class TranslationBackend {
 public:
  virtual ~TranslationBackend() = default;
  virtual std::vector<std::string> translate(const std::vector<std::string>& texts,
                                             const std::string& source_lang,
                                             const std::string& target_lang) = 0;
  std::uint64_t calls() const { return calls_.load(); }

 protected:
  std::uint64_t count_call() { return calls_.fetch_add(1); }

 private:
  std::atomic<std::uint64_t> calls_{0};
};

inline constexpr std::string_view kTag = "\xE2\x9F\xA6T\xE2\x9F\xA7";  // ⟦T⟧

class IdentityBackend final : public TranslationBackend {
 public:
  std::vector<std::string> translate(const std::vector<std::string>& texts, const std::string&,
                                     const std::string&) override {
    count_call();
    return texts;
  }
};

class TaggingBackend final : public TranslationBackend {
 public:
  std::vector<std::string> translate(const std::vector<std::string>& texts, const std::string&,
                                     const std::string&) override {
    count_call();
    std::vector<std::string> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(std::string(kTag) + t);
    return out;
  }
};

// Fails the first `failures` calls (across all threads), then delegates.
class FlakyBackend final : public TranslationBackend {
 public:
  FlakyBackend(std::unique_ptr<TranslationBackend> inner, std::uint64_t failures)
      : inner_(std::move(inner)), failures_(failures) {}

  std::vector<std::string> translate(const std::vector<std::string>& texts, const std::string& src,
                                     const std::string& tgt) override {
    const auto n = count_call();
    if (n < failures_) throw BackendError("injected failure " + std::to_string(n + 1));
    return inner_->translate(texts, src, tgt);
  }

 private:
  std::unique_ptr<TranslationBackend> inner_;
  std::uint64_t failures_;
};

// POST {base}/v1/translate with {"texts", "source_lang", "target_lang"};
// expects {"translations": [...]} aligned by position.
class HttpBackend final : public TranslationBackend {
 public:
  explicit HttpBackend(std::string url, int timeout_seconds = 600) : timeout_(timeout_seconds) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("backend url needs a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    origin_ = url.substr(0, path_start);
    if (path_start != std::string::npos) prefix_ = url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }

  std::vector<std::string> translate(const std::vector<std::string>& texts, const std::string& src,
                                     const std::string& tgt) override {
    count_call();
    httplib::Client client(origin_);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    const json body{{"texts", texts}, {"source_lang", src}, {"target_lang", tgt}};
    const auto res = client.Post(prefix_ + "/v1/translate", body.dump(-1, ' ', false), "application/json");
    if (!res) throw BackendError("backend request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw BackendError("backend returned HTTP " + std::to_string(res->status));
    json reply;
    try {
      reply = json::parse(res->body);
    } catch (const json::exception& e) {
      throw BackendError(std::string("backend reply is not JSON: ") + e.what());
    }
    if (!reply.is_object() || !reply.contains("translations") || !reply["translations"].is_array()) {
      throw BackendError("backend reply lacks translations array");
    }
    std::vector<std::string> out;
    for (const auto& t : reply["translations"]) {
      if (!t.is_string()) throw BackendError("backend translation is not a string");
      out.push_back(t.get<std::string>());
    }
    if (out.size() != texts.size()) {
      throw BackendError("backend returned " + std::to_string(out.size()) + " translations for " +
                         std::to_string(texts.size()) + " texts");
    }
    return out;
  }

 private:
  std::string origin_;
  std::string prefix_;
  int timeout_;
};

// "mock:identity", "mock:tag", "mock:flaky:<n>" (identity after n failures),
// "mock:flaky:<n>:tag", or an http(s) URL.
inline std::unique_ptr<TranslationBackend> make_backend(std::string_view spec) {
  if (spec == "mock:identity") return std::make_unique<IdentityBackend>();
  if (spec == "mock:tag") return std::make_unique<TaggingBackend>();
  if (spec.starts_with("mock:flaky:")) {
    auto rest = spec.substr(11);
    std::unique_ptr<TranslationBackend> inner = std::make_unique<IdentityBackend>();
    if (const auto colon = rest.find(':'); colon != std::string_view::npos) {
      const auto inner_name = rest.substr(colon + 1);
      if (inner_name == "tag") {
        inner = std::make_unique<TaggingBackend>();
      } else if (inner_name != "identity") {
        throw ConfigError("unknown flaky inner backend: " + std::string(inner_name));
      }
      rest = rest.substr(0, colon);
    }
    std::uint64_t n = 0;
    if (rest.empty()) throw ConfigError("mock:flaky needs a failure count");
    for (const char c : rest) {
      if (c < '0' || c > '9') throw ConfigError("bad flaky failure count: " + std::string(rest));
      n = n * 10 + static_cast<std::uint64_t>(c - '0');
    }
    return std::make_unique<FlakyBackend>(std::move(inner), n);
  }
  if (spec.starts_with("http://") || spec.starts_with("https://")) {
    return std::make_unique<HttpBackend>(std::string(spec));
  }
  throw ConfigError("unknown backend: " + std::string(spec));
}

}  // namespace lowres::translate
