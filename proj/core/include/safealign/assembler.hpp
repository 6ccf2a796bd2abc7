#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "safealign/sample.hpp"

namespace safealign {

struct SelectionPolicy {
  /// Absolute perplexity ceiling; when unset, the nearest-rank percentile of
  /// the run's perplexities is used.
  std::optional<double> tau_ppl;
  double tau_ppl_percentile = 90.0;
  double tau_response = 0.7;
  double tau_instruction = 0.3;
  /// General records per selected safety record (0.25 gives 4:1), unless an
  /// absolute count is set.
  double general_ratio = 0.25;
  std::optional<std::size_t> general_count;
  Origin tie_break = Origin::regenerated;
  /// Export fails if fewer samples are selected.
  std::size_t min_selected = 0;

  std::vector<std::string> problems() const;
};

void to_json(nlohmann::json& j, const SelectionPolicy& p);
void from_json(const nlohmann::json& j, SelectionPolicy& p);

/// Nearest-rank percentile (p in (0, 100]) of an unsorted sample.
/// Throws Errc::empty_input.
double nearest_rank(std::vector<double> values, double p);

/// Rejection reasons, in the order the predicates are checked.
inline constexpr std::string_view kRejectPpl = "ppl";
inline constexpr std::string_view kRejectResponse = "response";
inline constexpr std::string_view kRejectInstruction = "instruction";
inline constexpr std::string_view kRejectMissing = "missing-feature";

struct SelectionResult {
  std::vector<AlignmentSample> selected;
  std::vector<AlignmentSample> rejected;
  double tau_ppl = 0.0;
  std::map<std::string, std::size_t> reasons;
};

/// The resolved perplexity ceiling for a run: the absolute value if set,
/// otherwise the percentile over samples that have a perplexity (+inf if
/// none do).
double resolve_tau_ppl(const std::vector<AlignmentSample>& samples, const SelectionPolicy& policy);

/// Keeps a sample iff ppl <= tau_ppl, max response safety >= tau_response and
/// instruction safety <= tau_instruction. Predicates are checked in that
/// order; the first that fails, or whose feature is missing, is the reason.
/// Input must be scored; order is preserved in both partitions.
SelectionResult select(std::vector<AlignmentSample> samples, const SelectionPolicy& policy);

/// Highest safety_score; ties go to `tie_break`, then to the earlier
/// candidate. Throws Errc::invalid_argument for a sample without candidates.
const CandidateResponse& choose_response(const AlignmentSample& sample, Origin tie_break = Origin::regenerated);

enum class ExportFormat { instruction, conversation };

std::string_view to_string(ExportFormat f) noexcept;
/// Throws Errc::unknown_format.
ExportFormat parse_export_format(std::string_view s);

struct SftRecord {
  std::string instruction;
  std::string response;
  nlohmann::json meta;  // category/source/origin/features for safety records
};

nlohmann::json to_export_json(const SftRecord& r, ExportFormat format);

/// Reads chat-format JSON Lines; malformed rows are skipped and counted.
/// Throws Errc::unreadable_path.
std::vector<SftRecord> load_general(const std::filesystem::path& path, std::size_t* malformed = nullptr);

struct ExportOptions {
  ExportFormat format = ExportFormat::instruction;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> general_corpus;
  /// Copied into the manifest verbatim.
  nlohmann::json template_versions = nlohmann::json::object();
  std::string base_model = "Llama-3.2-1B-Instruct";
};

struct ExportResult {
  std::vector<SftRecord> records;
  nlohmann::json manifest;
  std::size_t safety_count = 0;
  std::size_t general_count = 0;
};

/// Builds one SFT record per selected sample from its chosen response, draws
/// the general share from the general corpus, shuffles the union with the
/// seed, and writes dataset.jsonl and manifest.json into `out_dir`.
/// Throws Errc::invalid_argument if fewer than policy.min_selected samples
/// were selected.
ExportResult mix_and_export(const SelectionResult& selection, const SelectionPolicy& policy,
                            const ExportOptions& options, const std::filesystem::path& out_dir);

/// "4:1" style ratio reduced by the gcd.
std::string ratio_string(std::size_t a, std::size_t b);

}  // namespace safealign
