#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "safealign/config.hpp"
#include "safealign/eval.hpp"
#include "safealign/gateway.hpp"

namespace safealign {

enum class Stage { ingest, tag, diversify, regen, score, assemble };

inline constexpr std::array<Stage, 6> kStages = {Stage::ingest, Stage::tag,   Stage::diversify,
                                                 Stage::regen,  Stage::score, Stage::assemble};

std::string_view to_string(Stage s) noexcept;
/// Throws Errc::invalid_argument.
Stage parse_stage(std::string_view s);
/// Comma-separated list; "all" or empty selects every stage.
std::vector<Stage> parse_stage_list(std::string_view s);

struct StageState {
  std::string status = "pending";  // pending | running | done | failed
  std::string digest;              // of the stage output directory
  std::string input_digest;        // config digest + upstream output digest
  std::string started_at;
  std::string finished_at;
  std::string error;
};

struct RunState {
  std::uint64_t seed = 0;
  std::map<std::string, StageState> stages;
  std::vector<std::string> executed;  // this invocation only
  std::vector<std::string> skipped;   // valid checkpoints reused

  bool failed() const;
  nlohmann::json to_json() const;
  static RunState from_json(const nlohmann::json& j);
  /// Empty state if the file does not exist.
  static RunState load(const std::filesystem::path& path);
};

struct RunOptions {
  std::vector<Stage> stages;  // empty = all
  bool resume = false;
  /// Use this gateway instead of building one from the config's backends.
  Gateway* gateway = nullptr;
};

/// Runs stages in dependency order. Each stage writes <output_dir>/<stage>/
/// through a temporary directory and a rename, then records its digest in
/// <output_dir>/run_state.json. With resume, a stage whose recorded digests
/// still match is skipped. A failing stage is recorded as failed and halts
/// the run; upstream checkpoints stay intact.
///
/// Throws Errc::invalid_config if the config does not validate, and
/// Errc::invalid_argument if a requested stage's upstream has no checkpoint.
///
/// Setting SAFEALIGN_FAULT_STAGE=<stage> kills the process with SIGKILL after
/// that stage has written its temporary output but before it commits.
RunState run_pipeline(const RunConfig& config, const RunOptions& options = {});

std::filesystem::path stage_dir(const RunConfig& config, Stage s);
std::filesystem::path eval_dir(const RunConfig& config);

/// Draws the eval set from config.eval.pool and initializes the verdict
/// store under <output_dir>/eval.
EvalSet eval_build(const RunConfig& config);

struct McSummary {
  McReport mc;
  std::optional<ResponsibilityResult> responsibility;
};

/// Answers and scores the multiple-choice items; writes mc_report.json.
McSummary eval_mc(const RunConfig& config, Gateway& gateway);

struct JudgeSummary {
  std::size_t judged = 0;
  std::size_t skipped = 0;  // already had a verdict
  std::size_t failed = 0;   // backend errors, left without a verdict
};

/// Judges every open-generation item without a verdict and records the
/// outcome in the verdict store.
JudgeSummary eval_judge(const RunConfig& config, Gateway& gateway);

/// Writes report.json and report.txt; with a baseline report, adds deltas.
nlohmann::json eval_report(const RunConfig& config, const std::optional<std::filesystem::path>& baseline = std::nullopt);

}  // namespace safealign
