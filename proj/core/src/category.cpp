#include "safealign/category.hpp"

namespace safealign {

const std::array<CategoryInfo, kCategoryCount>& all_categories() noexcept {
  static constexpr std::array<CategoryInfo, kCategoryCount> kTable{{
      {Category::OFF, "OFF", "Insult and Offensiveness"},
      {Category::UB, "UB", "Unfairness and Bias"},
      {Category::CIA, "CIA", "Crimes and Illegal Activities"},
      {Category::PP, "PP", "Privacy and Property"},
      {Category::EM, "EM", "Ethics and Morality"},
      {Category::PMH, "PMH", "Physical and Mental Health"},
      {Category::IA, "IA", "Instruction Attack"},
      {Category::MI, "MI", "Malicious Inducement"},
      {Category::DP, "DP", "Data Privacy"},
      {Category::NS, "NS", "Network Security"},
      {Category::EX, "EX", "Extremism"},
      {Category::PR, "PR", "Pornographic Related"},
      {Category::DT, "DT", "Dangerous Topics"},
      {Category::PS, "PS", "Political Remarks"},
  }};
  return kTable;
}

std::string_view code(Category c) noexcept { return all_categories()[static_cast<std::size_t>(c)].code; }

std::string_view display_name(Category c) noexcept {
  return all_categories()[static_cast<std::size_t>(c)].name;
}

std::optional<Category> parse_category(std::string_view code) noexcept {
  for (const auto& info : all_categories()) {
    if (info.code == code) return info.category;
  }
  return std::nullopt;
}

}  // namespace safealign
