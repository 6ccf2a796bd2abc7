#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "safealign/category.hpp"

namespace safealign {

enum class Origin { original, regenerated };

std::string_view to_string(Origin o) noexcept;
Origin parse_origin(std::string_view s);

struct CandidateResponse {
  std::string text;
  Origin origin = Origin::original;
  std::optional<double> safety_score;  // set by reward scoring only
};

struct FeatureProvenance {
  std::string ppl_scorer;
  std::string response_backend;
  std::string response_template;
  std::string instruction_backend;
  std::string instruction_template;
  /// A single-candidate sample was scored by duplicating it into both slots
  /// and averaging the two scores.
  bool degenerate_pair = false;
  std::vector<std::string> failures;
};

/// Missing fields stay nullopt; nothing is ever defaulted.
struct SafetyFeatureVector {
  std::optional<double> prompt_ppl;
  std::optional<std::vector<double>> response_safety;  // one per candidate
  std::optional<double> instruction_safety;            // low = riskier instruction
  FeatureProvenance provenance;

  std::optional<double> max_response_safety() const;
};

enum class SampleStatus { raw, tagged, augmented_origin, scored, selected, rejected };

std::string_view to_string(SampleStatus s) noexcept;
SampleStatus parse_status(std::string_view s);

struct AugmentationInfo {
  std::string generator;      // keyword-fewshot | derive-from-existing
  std::string seed_material;  // keywords or source sample id
  double temperature = 1.0;
  double top_p = 0.95;
  std::int64_t request_seed = 0;
  std::string template_version;
};

struct AlignmentSample {
  std::string id;
  std::string prompt;
  std::optional<std::string> original_response;
  std::string source;
  std::optional<std::string> source_scenario;
  std::vector<std::string> intent_labels;
  std::optional<Category> category;
  std::vector<CandidateResponse> candidates;
  std::optional<SafetyFeatureVector> features;
  SampleStatus status = SampleStatus::raw;

  std::vector<Category> secondary_categories;
  std::vector<std::string> unmapped_labels;
  std::optional<std::string> regen_rationale;  // never exported
  bool regen_warning = false;
  std::optional<AugmentationInfo> augmentation;
  std::optional<std::string> rejection_reason;

  /// Builds a raw sample; throws Errc::invalid_argument if the prompt is
  /// empty after normalization.
  static AlignmentSample make(std::string_view prompt, std::string source);

  /// Forward-only status transition; throws Errc::invalid_argument otherwise.
  void advance(SampleStatus to);
};

/// Content hash of the normalized prompt.
std::string sample_id(std::string_view prompt);

void to_json(nlohmann::json& j, const CandidateResponse& c);
void from_json(const nlohmann::json& j, CandidateResponse& c);
void to_json(nlohmann::json& j, const SafetyFeatureVector& f);
void from_json(const nlohmann::json& j, SafetyFeatureVector& f);
void to_json(nlohmann::json& j, const AlignmentSample& s);
void from_json(const nlohmann::json& j, AlignmentSample& s);

/// A sample store is a directory of JSON Lines shards plus index.json.
void write_store(const std::filesystem::path& dir, const std::vector<AlignmentSample>& samples,
                 std::size_t shard_size = 1000);
std::vector<AlignmentSample> read_store(const std::filesystem::path& dir);

}  // namespace safealign
