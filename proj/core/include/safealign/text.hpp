#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace safealign::text {

/// Canonical form used for content ids, dedup and request hashing:
/// NFC, every run of Unicode whitespace collapsed to one ASCII space, trimmed.
/// No case folding.
std::string normalize(std::string_view s);

std::string nfc(std::string_view s);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

std::uint64_t fnv1a64(std::string_view data) noexcept;

std::u32string to_u32(std::string_view utf8);
std::string to_utf8(std::u32string_view s);
std::size_t codepoint_count(std::string_view utf8);

bool is_space(char32_t c) noexcept;
bool is_cjk(char32_t c) noexcept;
bool contains_cjk(std::string_view utf8);

/// Trims Unicode whitespace from both ends.
std::string trim(std::string_view s);
std::string ascii_lower(std::string_view s);

/// Splits on any of the given (possibly multi-byte) separators. Empty pieces
/// are kept; callers trim and filter.
std::vector<std::string> split_any(std::string_view s, const std::vector<std::string_view>& separators);

}  // namespace safealign::text
