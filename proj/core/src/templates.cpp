#include "safealign/templates.hpp"

#include "safealign/error.hpp"
#include "safealign/jsonl.hpp"
#include "safealign/text.hpp"

namespace safealign {
namespace detail {
const std::map<std::string, std::string_view, std::less<>>& embedded_data();
}

std::string_view builtin_data(std::string_view key) {
  const auto& data = detail::embedded_data();
  auto it = data.find(key);
  if (it == data.end()) throw Error(Errc::not_found, "no builtin data '" + std::string(key) + "'");
  return it->second;
}

PromptTemplate PromptTemplate::parse(std::string_view name, std::string_view content) {
  PromptTemplate t;
  t.name = std::string(name);
  std::size_t sep = content.find("\n---\n");
  if (content.rfind("version:", 0) != 0 || sep == std::string_view::npos) {
    throw Error(Errc::invalid_argument, "template '" + t.name + "' lacks a 'version:' header and '---' separator");
  }
  t.version = text::trim(content.substr(8, sep - 8));
  std::string_view body = content.substr(sep + 5);
  while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) body.remove_suffix(1);
  t.body = std::string(body);
  if (t.version.empty()) throw Error(Errc::invalid_argument, "template '" + t.name + "' has an empty version");
  return t;
}

PromptTemplate PromptTemplate::load(std::string_view name, const std::filesystem::path& path) {
  return parse(name, jsonl::read_file(path));
}

PromptTemplate PromptTemplate::builtin(std::string_view name) { return parse(name, builtin_data(name)); }

std::string PromptTemplate::render(const std::map<std::string, std::string, std::less<>>& slots) const {
  std::string out;
  out.reserve(body.size());
  std::size_t i = 0;
  while (i < body.size()) {
    if (body[i] == '{') {
      std::size_t close = body.find('}', i + 1);
      if (close != std::string::npos) {
        auto it = slots.find(std::string_view(body).substr(i + 1, close - i - 1));
        if (it != slots.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += body[i++];
  }
  return out;
}

std::size_t PromptTemplate::count(std::string_view needle) const {
  std::size_t n = 0;
  for (std::size_t pos = body.find(needle); pos != std::string::npos; pos = body.find(needle, pos + needle.size())) ++n;
  return n;
}

void PromptTemplate::require_slots(const std::vector<std::string_view>& slots) const {
  for (std::string_view s : slots) {
    if (count("{" + std::string(s) + "}") == 0) {
      throw Error(Errc::invalid_argument, "template '" + name + "' is missing slot {" + std::string(s) + "}");
    }
  }
}

}  // namespace safealign
