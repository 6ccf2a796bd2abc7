#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace safealign::jsonl {

using nlohmann::json;
namespace fs = std::filesystem;

/// Calls fn(line_number, text) for every non-blank line. Line numbers are
/// 1-based. Throws Errc::unreadable_path if the file cannot be opened.
void for_each_line(const fs::path& path, const std::function<void(std::size_t, std::string_view)>& fn);

/// Strict reader: any unparseable line throws Errc::malformed_request with the
/// line number.
std::vector<json> read_all(const fs::path& path);

/// Compact single-line dump; invalid UTF-8 is replaced rather than thrown.
std::string dump(const json& value);

void write_all(const fs::path& path, const std::vector<json>& rows);

std::string read_file(const fs::path& path);

/// Writes to a sibling temp file then renames, so readers never observe a
/// half-written file.
void atomic_write(const fs::path& path, std::string_view content);

std::string digest_file(const fs::path& path);

/// Digest over relative paths and contents of every regular file, in sorted
/// path order.
std::string digest_dir(const fs::path& dir);

class Appender {
 public:
  explicit Appender(const fs::path& path);
  void append(const json& row);
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  std::ofstream out_;
  std::mutex mu_;
};

}  // namespace safealign::jsonl
