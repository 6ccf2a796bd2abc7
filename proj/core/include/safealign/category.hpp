#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace safealign {

/// The 14 safety scenarios of the evaluation taxonomy, in priority order.
/// The enumerator order is significant: label normalization resolves
/// multi-label conflicts by the lowest enumerator.
enum class Category : std::size_t {
  OFF,
  UB,
  CIA,
  PP,
  EM,
  PMH,
  IA,
  MI,
  DP,
  NS,
  EX,
  PR,
  DT,
  PS,
};

inline constexpr std::size_t kCategoryCount = 14;

struct CategoryInfo {
  Category category;
  std::string_view code;
  std::string_view name;
};

const std::array<CategoryInfo, kCategoryCount>& all_categories() noexcept;

std::string_view code(Category c) noexcept;
std::string_view display_name(Category c) noexcept;
std::optional<Category> parse_category(std::string_view code) noexcept;

}  // namespace safealign
