#pragma once

#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "rlsta/errors.hpp"
#include "rlsta/util.hpp"

namespace rlsta {

struct JsonLine {
  std::size_t line_number = 0;  // 1-based
  json value;
};

// Reads a JSON Lines file. Blank lines are skipped; a line that does not parse is
// reported with its path and line number.
std::vector<JsonLine> read_jsonl(const std::string& path);
std::vector<JsonLine> parse_jsonl(std::string_view content, const std::string& source_name);

// Decodes every line into T, naming the offending line on failure.
template <typename T>
std::vector<T> read_jsonl_as(const std::string& path) {
  std::vector<T> out;
  for (auto& line : read_jsonl(path)) {
    try {
      out.push_back(line.value.get<T>());
    } catch (const std::exception& e) {
      throw ValidationError(path + ":" + std::to_string(line.line_number) +
                            ": malformed record: " + e.what());
    }
  }
  return out;
}

std::string dump_line(const json& value);

// Single writer per output file; each append is one complete line.
class JsonlWriter {
 public:
  explicit JsonlWriter(const std::string& path, bool append = true);

  void write(const json& value);
  void flush();

 private:
  std::mutex mutex_;
  std::ofstream out_;
};

template <typename T>
void write_jsonl(const std::string& path, const std::vector<T>& items) {
  std::string content;
  for (const auto& item : items) content += dump_line(json(item));
  write_file_atomic(path, content);
}

}  // namespace rlsta
