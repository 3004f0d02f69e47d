#include "rlsta/jsonl.hpp"
#include "rlsta/errors.hpp"

#include <filesystem>

namespace rlsta {

std::vector<JsonLine> parse_jsonl(std::string_view content, const std::string& source_name) {
  std::vector<JsonLine> out;
  std::size_t line_no = 0;
  for (const auto& line : split_lines(content)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw ValidationError(source_name + ":" + std::to_string(line_no) + ": invalid JSON");
    }
    out.push_back({line_no, std::move(j)});
  }
  return out;
}

std::vector<JsonLine> read_jsonl(const std::string& path) {
  return parse_jsonl(read_file(path), path);
}

std::string dump_line(const json& value) { return value.dump() + "\n"; }

JsonlWriter::JsonlWriter(const std::string& path, bool append)
    : out_(path, std::ios::binary | (append ? std::ios::app : std::ios::trunc)) {
  if (!out_) throw ValidationError("cannot open output: " + path);
}

void JsonlWriter::write(const json& value) {
  const std::string line = dump_line(value);
  std::lock_guard lock(mutex_);
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  out_.flush();
}

void JsonlWriter::flush() {
  std::lock_guard lock(mutex_);
  out_.flush();
}

}  // namespace rlsta
