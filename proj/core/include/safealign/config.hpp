#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "safealign/assembler.hpp"
#include "safealign/category.hpp"
#include "safealign/corpus.hpp"
#include "safealign/diversity.hpp"
#include "safealign/gateway.hpp"
#include "safealign/intent.hpp"
#include "safealign/templates.hpp"

namespace safealign {

struct PplConfig {
  std::string kind = "ngram";  // ngram | backend
  std::string backend;         // kind == backend
  std::size_t order = 3;       // kind == ngram
  /// Chat-format JSON Lines used to fit the n-gram model; defaults to the
  /// general corpus.
  std::optional<std::filesystem::path> fit_corpus;
};

struct EvalConfig {
  std::optional<std::filesystem::path> pool;
  std::size_t per_category_n = 100;
  std::string judged_backend;
  std::string judge_backend;
  std::string mc_backend;
  std::vector<std::string> evaluators;
};

/// Declarative run configuration. Relative paths resolve against the
/// directory of the config file.
struct RunConfig {
  std::filesystem::path base_dir;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  std::size_t workers = 4;
  std::optional<std::filesystem::path> cache;

  std::vector<BackendSpec> backends;
  std::vector<CorpusManifest> corpora;
  std::optional<std::filesystem::path> taxonomy;
  std::optional<UnmappedPolicy> unmapped_policy;
  std::map<std::string, std::filesystem::path> templates;

  std::string tagging_backend;

  std::optional<DiversityPlan> plan;  // nullopt = derive the desk-scale default
  std::string augment_backend;
  std::map<Category, std::vector<std::string>> keywords;
  std::size_t shots = 3;

  std::string safe_model;
  double regen_temperature = 0.3;
  double regen_top_p = 0.9;

  PplConfig ppl;
  std::string judge_backend;

  SelectionPolicy selection;
  std::optional<std::filesystem::path> general_corpus;
  ExportFormat export_format = ExportFormat::instruction;

  EvalConfig eval;

  /// Throws Errc::invalid_config on structural errors (wrong types, unknown
  /// enum values). Semantic problems are left to validate().
  static RunConfig parse(const nlohmann::json& doc, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path);

  /// Every violated invariant, one line each. Never mutates.
  std::vector<std::string> validate() const;

  /// The configured override or the builtin template.
  PromptTemplate prompt_template(const std::string& name) const;
  IntentTaxonomy load_taxonomy() const;

  /// Digest over the settings that shape pipeline outputs and the contents of
  /// every referenced input file.
  std::string digest() const;

  nlohmann::json to_json() const;
};

/// Registers every configured backend.
void register_backends(Gateway& gateway, const RunConfig& config);

}  // namespace safealign
