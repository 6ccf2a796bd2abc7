#include "safealign/jsonl.hpp"

#include <algorithm>
#include <sstream>

#include "safealign/error.hpp"
#include "safealign/text.hpp"

namespace safealign::jsonl {

void for_each_line(const fs::path& path, const std::function<void(std::size_t, std::string_view)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::unreadable_path, path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fn(number, line);
  }
}

std::vector<json> read_all(const fs::path& path) {
  std::vector<json> rows;
  for_each_line(path, [&](std::size_t number, std::string_view line) {
    try {
      rows.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw Error(Errc::malformed_request, path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  });
  return rows;
}

std::string dump(const json& value) { return value.dump(-1, ' ', false, json::error_handler_t::replace); }

void write_all(const fs::path& path, const std::vector<json>& rows) {
  std::string content;
  for (const auto& row : rows) {
    content += dump(row);
    content += '\n';
  }
  atomic_write(path, content);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::unreadable_path, path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void atomic_write(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(Errc::io_error, "short write " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string digest_file(const fs::path& path) { return text::sha256_hex(read_file(path)); }

std::string digest_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::string acc;
  for (const auto& f : files) {
    acc += fs::relative(f, dir).generic_string();
    acc += '\0';
    acc += digest_file(f);
    acc += '\n';
  }
  return text::sha256_hex(acc);
}

Appender::Appender(const fs::path& path) : path_(path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | std::ios::app);
  if (!out_) throw Error(Errc::io_error, "cannot append to " + path.string());
}

void Appender::append(const json& row) {
  std::string line = dump(row);
  line += '\n';
  std::lock_guard lock(mu_);
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  out_.flush();
}

}  // namespace safealign::jsonl
