#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "safealign/category.hpp"
#include "safealign/gateway.hpp"
#include "safealign/templates.hpp"

namespace safealign {

enum class EvalKind { multiple_choice, open_generation, responsibility_mc };
enum class VerdictLabel { safe, unsafe, uncertain };
enum class VerdictSource { judge, human };

std::string_view to_string(EvalKind k) noexcept;
std::string_view to_string(VerdictLabel l) noexcept;
std::string_view to_string(VerdictSource s) noexcept;
EvalKind parse_eval_kind(std::string_view s);
VerdictLabel parse_verdict_label(std::string_view s);
VerdictSource parse_verdict_source(std::string_view s);

struct Verdict {
  VerdictLabel label = VerdictLabel::uncertain;
  VerdictSource source = VerdictSource::judge;
  std::string judge_raw;
  std::string timestamp;
};

struct EvalItem {
  std::string id;
  EvalKind kind = EvalKind::open_generation;
  std::optional<Category> category;
  std::string question;
  std::vector<std::string> options;
  std::optional<std::size_t> correct;
  std::optional<std::string> model_answer;
  std::optional<Verdict> verdict;

  std::vector<std::string> problems() const;
};

void to_json(nlohmann::json& j, const Verdict& v);
void from_json(const nlohmann::json& j, Verdict& v);
void to_json(nlohmann::json& j, const EvalItem& item);
/// Accepts "correct" as an index or "answer" as a letter. A missing id is
/// derived from the kind and question.
void from_json(const nlohmann::json& j, EvalItem& item);

/// Throws Errc::malformed_request naming the line of the first invalid item.
std::vector<EvalItem> load_eval_items(const std::filesystem::path& path);
void write_eval_items(const std::filesystem::path& path, const std::vector<EvalItem>& items);

struct EvalSet {
  std::vector<EvalItem> items;
  std::vector<std::string> warnings;
  nlohmann::json manifest;
};

/// Stratified by category (items without one form a "none" stratum):
/// min(available, per_category_n) items per stratum, drawn with a per-stratum
/// seeded shuffle. Every one of the 14 categories with no items gets a
/// warning. Output is ordered by category then id.
EvalSet build_eval_set(std::vector<EvalItem> pool, std::size_t per_category_n, std::uint64_t seed);

/// Option index the completion chose, or nullopt. Explicit markers ("answer
/// is B", "(B)", "答案是B", "option B") win over a bare standalone letter;
/// a standalone "A" that reads as the English article is ignored. Letters at
/// or beyond `option_count` never match.
std::optional<std::size_t> extract_choice(std::string_view completion, std::size_t option_count = 4);

std::string option_letters(const std::vector<std::string>& options);

struct AccuracyCell {
  std::size_t correct = 0;
  std::size_t total = 0;
  std::size_t unextractable = 0;
  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
};

struct McReport {
  std::map<std::string, AccuracyCell> per_category;  // category code or "none"
  AccuracyCell overall;
  /// Question-count weighted: sum(correct) / sum(total).
  double weighted_average() const { return overall.accuracy(); }
};

void to_json(nlohmann::json& j, const McReport& r);

/// Fills model_answer for MC items that lack one.
void generate_answers(std::vector<EvalItem>& items, Gateway& gateway, const std::string& backend_id,
                      const PromptTemplate& tmpl = PromptTemplate::builtin("mc_answer"), std::size_t workers = 4);

/// Scores MC items with a model_answer. Unextractable answers count as wrong
/// and are tallied.
McReport score_mc(const std::vector<EvalItem>& items);

/// Mean of per-evaluator accuracies, rounded to 4 decimals.
/// Throws Errc::empty_input or Errc::invalid_argument for values outside [0, 1].
double responsibility_accuracy(const std::vector<double>& accuracies);

struct ResponsibilityResult {
  std::map<std::string, double> per_evaluator;
  double mean = 0.0;
};

/// Each evaluator backend reads every model answer through the extraction
/// template and names the chosen letter; the per-evaluator accuracies are
/// then averaged.
ResponsibilityResult evaluate_responsibility(const std::vector<EvalItem>& items, Gateway& gateway,
                                             const std::vector<std::string>& evaluators,
                                             const PromptTemplate& tmpl = PromptTemplate::builtin("mc_extract"),
                                             std::size_t workers = 4);

/// safe | unsafe | uncertain from judge output (English or Chinese). Output
/// that is not one of the three words, alone or leading, is uncertain.
VerdictLabel parse_verdict(std::string_view judge_output);

struct JudgeSetup {
  std::string judged_backend;
  std::string judge_backend;
  PromptTemplate tmpl = PromptTemplate::builtin("judge_generation");
};

/// Generates the judged model's answer when missing, then asks the judge.
/// Backend errors propagate and leave the item without a verdict. Returns the
/// judge's verdict without touching item.verdict.
Verdict judge_generation(EvalItem& item, Gateway& gateway, const JudgeSetup& setup);

struct CategoryTally {
  std::size_t total = 0;
  std::size_t safe = 0;
  std::size_t unsafe = 0;
  std::size_t pending = 0;   // uncertain, awaiting a human
  std::size_t unjudged = 0;  // no verdict yet
  /// safe / (safe + unsafe); null when nothing is resolved.
  std::optional<double> score() const;
};

struct ScenarioReport {
  std::map<std::string, CategoryTally> per_category;  // category code
  CategoryTally overall;
  std::optional<double> weighted_average() const { return overall.score(); }
};

void to_json(nlohmann::json& j, const ScenarioReport& r);
void from_json(const nlohmann::json& j, ScenarioReport& r);

/// Pure function of the items' current verdicts. Only open-generation items
/// count.
ScenarioReport build_report(const std::vector<EvalItem>& items);

struct DeltaRow {
  std::string category;
  std::optional<double> a;
  std::optional<double> b;
  std::optional<double> delta;  // b - a
};

/// Per-category b - a, sorted descending; rows without a delta come last.
/// Throws Errc::category_mismatch if the category sets differ.
std::vector<DeltaRow> compare_reports(const ScenarioReport& a, const ScenarioReport& b);

struct ScoreRow {
  std::string name;
  std::optional<double> average;
  std::map<std::string, std::optional<double>> scores;
};

ScoreRow to_row(std::string name, const ScenarioReport& r);
ScoreRow to_row(std::string name, const McReport& r);

/// "Model | Avg | <codes...>" with scores as percentages to two decimals.
/// Columns follow category order over the union of the rows' categories.
std::string render_table(const std::vector<ScoreRow>& rows);

struct ReviewProgress {
  std::size_t total = 0;
  std::size_t resolved = 0;
  std::size_t pending = 0;
  std::size_t unjudged = 0;
  std::map<std::string, CategoryTally> per_category;
};

void to_json(nlohmann::json& j, const ReviewProgress& p);

/// Open-generation items with their verdicts and an append-only audit log.
/// On open, the log is replayed over the items. All mutations serialize on
/// one mutex, so a human adjudication and a judge write never interleave on
/// an item.
class VerdictStore {
 public:
  using Clock = std::function<std::string()>;

  explicit VerdictStore(std::vector<EvalItem> items, std::optional<std::filesystem::path> log_path = std::nullopt,
                        Clock clock = {});

  /// Reads <dir>/items.jsonl and replays <dir>/verdicts.jsonl if present.
  static VerdictStore open(const std::filesystem::path& dir, Clock clock = {});
  /// Writes items.jsonl (without verdicts) and an empty log.
  static void create(const std::filesystem::path& dir, const std::vector<EvalItem>& items);

  /// Records a judge verdict. A human verdict already on the item is kept and
  /// returned instead. Throws Errc::not_found.
  Verdict record_judge(const std::string& item_id, VerdictLabel label, std::string judge_raw,
                       std::optional<std::string> model_answer = std::nullopt);

  /// Replaces an uncertain judge verdict with a human one. Throws
  /// Errc::not_found, Errc::invalid_argument for label "uncertain", and
  /// Errc::conflict when the item is not pending.
  Verdict adjudicate(const std::string& item_id, VerdictLabel label);

  /// Pending items, oldest uncertain verdict first.
  std::vector<EvalItem> queue(std::size_t limit) const;
  ReviewProgress progress() const;
  ScenarioReport report() const;
  std::vector<EvalItem> snapshot() const;
  std::optional<EvalItem> find(const std::string& item_id) const;
  std::size_t size() const;

 private:
  void apply(const nlohmann::json& event, bool append);
  std::string now() const;

  mutable std::mutex mu_;
  std::vector<EvalItem> items_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::map<std::string, std::uint64_t, std::less<>> pending_since_;
  std::uint64_t seq_ = 0;
  std::optional<std::filesystem::path> log_path_;
  Clock clock_;
};

}  // namespace safealign
