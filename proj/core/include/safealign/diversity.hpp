#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "safealign/category.hpp"
#include "safealign/gateway.hpp"
#include "safealign/sample.hpp"
#include "safealign/templates.hpp"

namespace safealign {

struct DiversityPlan {
  std::optional<std::size_t> default_cap;  // nullopt = unlimited
  std::map<Category, std::optional<std::size_t>> caps;
  std::size_t default_floor = 0;
  std::map<Category, std::size_t> floors;
  std::size_t budget = 0;
  double keyword_fraction = 0.5;
  double derive_fraction = 0.5;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  double top_p = 0.95;
  std::size_t per_call = 5;

  std::optional<std::size_t> cap_for(Category c) const;
  std::size_t floor_for(Category c) const;
  std::vector<std::string> problems() const;
};

void to_json(nlohmann::json& j, const DiversityPlan& p);
/// Missing keys keep their defaults; "cap": "unlimited" or a number.
void from_json(const nlohmann::json& j, DiversityPlan& p);

/// Desk-scale default: cap = nearest-rank 95th percentile of the per-category
/// counts, floor = min(10, cap), budget = sum of (cap - available) deficits.
DiversityPlan default_plan(const std::vector<AlignmentSample>& samples, std::uint64_t seed);

/// Per category: keep all when available <= floor, else keep min(available,
/// cap) chosen by a seeded shuffle of the id-sorted stratum. Output is sorted
/// by sample id. Throws Errc::invalid_argument on an uncategorized sample.
std::vector<AlignmentSample> rejection_sample(const std::vector<AlignmentSample>& samples, const DiversityPlan& plan);

/// Splits `budget` across categories in proportion to their deficits
/// (largest-remainder rounding, ties to taxonomy order).
std::map<Category, std::size_t> allocate_budget(const std::map<Category, std::size_t>& deficits, std::size_t budget);

inline constexpr std::string_view kKeywordGenerator = "keyword-fewshot";
inline constexpr std::string_view kDeriveGenerator = "derive-from-existing";

struct AugmentedPrompt {
  std::string text;
  Category category = Category::OFF;
  std::string generator;
  std::string seed_material;
  double temperature = 1.0;
  double top_p = 0.95;
  std::int64_t request_seed = 0;
  std::string template_version;
};

AlignmentSample to_sample(const AugmentedPrompt& p);

struct AugmentOutcome {
  std::vector<AugmentedPrompt> prompts;
  std::size_t parsed = 0;
  std::size_t dropped_duplicates = 0;
  bool zero_usable = false;
};

/// Newline-separated generator output: list numbering stripped, segments of
/// 8..300 code points kept.
std::vector<std::string> parse_generated(std::string_view completion);

class Augmenter {
 public:
  Augmenter(Gateway& gateway, std::string backend_id, DiversityPlan plan,
            PromptTemplate keyword_tmpl = PromptTemplate::builtin("augment_keyword"),
            PromptTemplate derive_tmpl = PromptTemplate::builtin("augment_derive"));

  ChatRequest keyword_request(Category category, const std::vector<std::string>& keywords,
                              const std::vector<std::string>& shots, std::size_t n, std::size_t round) const;
  ChatRequest derive_request(const AlignmentSample& source, std::size_t n, std::size_t round) const;

  /// `known_ids` holds sample ids already in the store; accepted prompts are
  /// added to it, which also dedups siblings. Throws Errc::invalid_argument
  /// when n == 0.
  AugmentOutcome augment_keyword(Category category, const std::vector<std::string>& keywords,
                                 const std::vector<std::string>& shots, std::size_t n,
                                 std::unordered_set<std::string>& known_ids, std::size_t round = 0) const;

  /// Requires a categorized source; category and seed material are inherited.
  AugmentOutcome augment_derive(const AlignmentSample& source, std::size_t n,
                                std::unordered_set<std::string>& known_ids, std::size_t round = 0) const;

  const DiversityPlan& plan() const { return plan_; }

 private:
  std::int64_t request_seed(std::string_view stratum, std::size_t round) const;
  AugmentOutcome accept(const Completion& c, Category category, std::string_view generator, std::string seed_material,
                        const ChatRequest& req, const PromptTemplate& tmpl, std::size_t n,
                        std::unordered_set<std::string>& known_ids) const;

  Gateway& gateway_;
  std::string backend_id_;
  DiversityPlan plan_;
  PromptTemplate keyword_tmpl_;
  PromptTemplate derive_tmpl_;
};

}  // namespace safealign
