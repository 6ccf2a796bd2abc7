#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace safealign {

/// A versioned prompt template. On disk:
///
///   version: intent-v1
///   ---
///   body with {slot} placeholders
struct PromptTemplate {
  std::string name;
  std::string version;
  std::string body;

  static PromptTemplate parse(std::string_view name, std::string_view file_content);
  static PromptTemplate load(std::string_view name, const std::filesystem::path& path);
  /// One of the templates shipped in core/data/templates.
  static PromptTemplate builtin(std::string_view name);

  /// Replaces every {slot} named in `slots`; other braces are left alone.
  std::string render(const std::map<std::string, std::string, std::less<>>& slots) const;

  std::size_t count(std::string_view needle) const;
  /// Throws Errc::invalid_argument naming the first missing slot.
  void require_slots(const std::vector<std::string_view>& slots) const;
};

/// Raw shipped data file by key (template names and "taxonomy").
std::string_view builtin_data(std::string_view key);

}  // namespace safealign
