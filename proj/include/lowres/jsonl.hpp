#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lowres/error.hpp"

namespace lowres::jsonl {

using json = nlohmann::json;

// Single-line UTF-8 serialization (no ASCII escaping of non-ASCII text).
inline std::string dump(const json& j) { return j.dump(-1, ' ', false); }

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + ": " + std::strerror(errno));
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return data;
}

inline void write_file(const std::filesystem::path& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing: " + std::strerror(errno));
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

inline json parse_line(std::string_view line, std::size_t line_no) {
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError("line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
  }
}

// Calls fn(object, line_number) for each nonblank line; line numbers start at 1.
inline void for_each_line(const std::filesystem::path& path,
                          const std::function<void(const json&, std::size_t)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + ": " + std::strerror(errno));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fn(parse_line(line, line_no), line_no);
  }
  if (in.bad()) throw IoError("read failed: " + path.string());
}

inline std::vector<json> read_all(const std::filesystem::path& path) {
  std::vector<json> out;
  for_each_line(path, [&](const json& j, std::size_t) { out.push_back(j); });
  return out;
}

template <class Range>
std::string to_string(const Range& objects) {
  std::string out;
  for (const json& j : objects) {
    out += dump(j);
    out += '\n';
  }
  return out;
}

template <class Range>
void write_all(const std::filesystem::path& path, const Range& objects) {
  write_file(path, to_string(objects));
}

// Append-only line log; each append is written and fsync'd before returning.
class DurableAppender {
 public:
  explicit DurableAppender(const std::filesystem::path& path) : path_(path) {
    fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw IoError("cannot open " + path.string() + ": " + std::strerror(errno));
  }
  DurableAppender(const DurableAppender&) = delete;
  DurableAppender& operator=(const DurableAppender&) = delete;
  ~DurableAppender() {
    if (fd_ >= 0) ::close(fd_);
  }

  void append(const json& j) {
    std::string line = dump(j);
    line += '\n';
    std::lock_guard lock(mu_);
    std::size_t written = 0;
    while (written < line.size()) {
      const ssize_t n = ::write(fd_, line.data() + written, line.size() - written);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw IoError("write failed: " + path_.string() + ": " + std::strerror(errno));
      }
      written += static_cast<std::size_t>(n);
    }
    if (::fsync(fd_) != 0) throw IoError("fsync failed: " + path_.string());
  }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  std::mutex mu_;
};

}  // namespace lowres::jsonl
