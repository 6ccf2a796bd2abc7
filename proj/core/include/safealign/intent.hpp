#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "safealign/category.hpp"
#include "safealign/gateway.hpp"
#include "safealign/sample.hpp"
#include "safealign/templates.hpp"

namespace safealign {

enum class UnmappedPolicy { bucket_other, hold_for_review };

std::string_view to_string(UnmappedPolicy p) noexcept;

/// The 14 categories plus the curated raw-label normalization map.
class IntentTaxonomy {
 public:
  static IntentTaxonomy builtin();
  static IntentTaxonomy load(const std::filesystem::path& path);
  static IntentTaxonomy parse(const nlohmann::json& doc);

  /// Case-, whitespace- and underscore-insensitive.
  std::optional<Category> lookup(std::string_view raw_label) const;
  void add(std::string_view raw_label, Category category);

  const std::string& definition(Category c) const { return definitions_[static_cast<std::size_t>(c)]; }
  std::size_t map_size() const { return map_.size(); }
  const std::string& version() const { return version_; }
  UnmappedPolicy unmapped_policy() const { return policy_; }
  void set_unmapped_policy(UnmappedPolicy p) { policy_ = p; }

  static std::string key(std::string_view raw_label);

 private:
  std::string version_;
  UnmappedPolicy policy_ = UnmappedPolicy::bucket_other;
  std::map<std::string, Category, std::less<>> map_;
  std::array<std::string, kCategoryCount> definitions_;
};

struct NormalizeResult {
  std::optional<Category> category;
  std::vector<Category> secondary;
  std::vector<std::string> unmapped;

  bool needs_review() const { return !category.has_value(); }
};

/// The mapped label whose category ranks first in taxonomy order decides the
/// primary category; other mapped categories become secondaries.
NormalizeResult normalize_labels(const std::vector<std::string>& raw_labels, const IntentTaxonomy& taxonomy);

/// Writes the result into the sample's category, secondary and unmapped
/// fields.
void apply_normalization(AlignmentSample& sample, const NormalizeResult& result);

inline constexpr std::string_view kUnlabeled = "unlabeled";

struct LabelParse {
  std::vector<std::string> labels;
  bool warning = false;  // output was empty or explanation text
};

/// Splits a classifier completion into trimmed, lowercased labels.
/// A segment counts as a label when it is short: at most 12 code points if it
/// contains CJK text, otherwise at most 4 words and 40 code points. Prose
/// (an internal sentence break, or a majority of long segments) yields
/// ["unlabeled"] with the warning flag set.
LabelParse parse_labels(std::string_view completion);

class IntentTagger {
 public:
  IntentTagger(Gateway& gateway, std::string backend_id,
               PromptTemplate tmpl = PromptTemplate::builtin("intent"));

  ChatRequest build_request(const AlignmentSample& sample) const;

  /// Requires sample.status == raw. Fills intent_labels and advances to
  /// tagged. Backend errors propagate and leave the sample untouched.
  std::vector<std::string> tag(AlignmentSample& sample) const;

  const PromptTemplate& prompt_template() const { return tmpl_; }

 private:
  Gateway& gateway_;
  std::string backend_id_;
  PromptTemplate tmpl_;
};

struct LabelHistogram {
  std::map<std::string, std::size_t> raw;       // per raw label
  std::map<std::string, std::size_t> category;  // per primary category code
  std::size_t total = 0;                        // labels parsed across samples
  std::vector<std::pair<std::string, std::size_t>> top_k;
};

/// Count-descending, ties lexicographic.
LabelHistogram histogram(const std::vector<AlignmentSample>& samples, std::size_t k);

void to_json(nlohmann::json& j, const LabelHistogram& h);

}  // namespace safealign
