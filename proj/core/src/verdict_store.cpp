#include <chrono>
#include <ctime>
#include <fstream>

#include "safealign/error.hpp"
#include "safealign/eval.hpp"
#include "safealign/jsonl.hpp"
#include "safealign/log.hpp"

namespace safealign {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void append_line(const fs::path& path, const json& event) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw Error(Errc::io_error, "cannot append to " + path.string());
  out << jsonl::dump(event) << '\n';
  out.flush();
  if (!out) throw Error(Errc::io_error, "write failed on " + path.string());
}

}  // namespace

VerdictStore::VerdictStore(std::vector<EvalItem> items, std::optional<fs::path> log_path, Clock clock)
    : log_path_(std::move(log_path)), clock_(std::move(clock)) {
  for (auto& item : items) {
    if (item.kind != EvalKind::open_generation) continue;
    if (index_.count(item.id)) throw Error(Errc::invalid_argument, "duplicate eval item id " + item.id);
    index_.emplace(item.id, items_.size());
    if (item.verdict && item.verdict->label == VerdictLabel::uncertain) pending_since_[item.id] = seq_++;
    items_.push_back(std::move(item));
  }
  if (log_path_ && fs::exists(*log_path_)) {
    jsonl::for_each_line(*log_path_, [&](std::size_t line_no, std::string_view line) {
      try {
        apply(json::parse(line), false);
      } catch (const json::exception& e) {
        // a torn final line from a crash mid-append
        log::warn("verdict_log_line_skipped", {{"line", line_no}, {"error", e.what()}});
      }
    });
  }
}

VerdictStore VerdictStore::open(const fs::path& dir, Clock clock) {
  return VerdictStore(load_eval_items(dir / "items.jsonl"), dir / "verdicts.jsonl", std::move(clock));
}

void VerdictStore::create(const fs::path& dir, const std::vector<EvalItem>& items) {
  fs::create_directories(dir);
  std::vector<EvalItem> bare = items;
  for (auto& item : bare) item.verdict.reset();
  write_eval_items(dir / "items.jsonl", bare);
  jsonl::atomic_write(dir / "verdicts.jsonl", "");
}

std::string VerdictStore::now() const { return clock_ ? clock_() : utc_now(); }

void VerdictStore::apply(const json& event, bool append) {
  const std::string id = event.at("item_id").get<std::string>();
  auto it = index_.find(id);
  if (it == index_.end()) throw Error(Errc::not_found, "no eval item " + id);
  EvalItem& item = items_[it->second];
  Verdict v;
  v.label = parse_verdict_label(event.at("label").get<std::string>());
  v.source = parse_verdict_source(event.at("source").get<std::string>());
  v.judge_raw = event.value("judge_raw", "");
  v.timestamp = event.value("timestamp", "");
  if (v.source == VerdictSource::judge && item.verdict && item.verdict->source == VerdictSource::human) return;
  if (v.source == VerdictSource::human) {
    if (!item.verdict || item.verdict->label != VerdictLabel::uncertain) return;
    v.judge_raw = item.verdict->judge_raw;
  }
  if (append && log_path_) append_line(*log_path_, event);
  if (event.contains("model_answer") && event["model_answer"].is_string()) {
    item.model_answer = event["model_answer"].get<std::string>();
  }
  item.verdict = v;
  const std::uint64_t seq = event.value("seq", seq_);
  seq_ = std::max(seq_, seq + 1);
  if (v.label == VerdictLabel::uncertain) {
    pending_since_.try_emplace(id, seq);
  } else {
    pending_since_.erase(id);
  }
}

Verdict VerdictStore::record_judge(const std::string& item_id, VerdictLabel label, std::string judge_raw,
                                   std::optional<std::string> model_answer) {
  std::lock_guard lock(mu_);
  auto it = index_.find(item_id);
  if (it == index_.end()) throw Error(Errc::not_found, "no eval item " + item_id);
  const EvalItem& item = items_[it->second];
  if (item.verdict && item.verdict->source == VerdictSource::human) return *item.verdict;
  json event = {{"seq", seq_},
                {"item_id", item_id},
                {"label", to_string(label)},
                {"source", "judge"},
                {"judge_raw", std::move(judge_raw)},
                {"timestamp", now()}};
  if (model_answer) event["model_answer"] = *model_answer;
  apply(event, true);
  return *items_[it->second].verdict;
}

Verdict VerdictStore::adjudicate(const std::string& item_id, VerdictLabel label) {
  if (label == VerdictLabel::uncertain) throw Error(Errc::invalid_argument, "a human verdict must be safe or unsafe");
  std::lock_guard lock(mu_);
  auto it = index_.find(item_id);
  if (it == index_.end()) throw Error(Errc::not_found, "no eval item " + item_id);
  const EvalItem& item = items_[it->second];
  if (!item.verdict || item.verdict->label != VerdictLabel::uncertain) {
    const std::string state = item.verdict ? std::string(to_string(item.verdict->label)) + " (" +
                                                 std::string(to_string(item.verdict->source)) + ")"
                                           : std::string("unjudged");
    throw Error(Errc::conflict, "item " + item_id + " is " + state + ", not pending");
  }
  json event = {{"seq", seq_},
                {"item_id", item_id},
                {"label", to_string(label)},
                {"source", "human"},
                {"timestamp", now()}};
  apply(event, true);
  return *items_[it->second].verdict;
}

std::vector<EvalItem> VerdictStore::queue(std::size_t limit) const {
  std::lock_guard lock(mu_);
  std::vector<std::pair<std::uint64_t, const EvalItem*>> pending;
  for (const auto& [id, since] : pending_since_) pending.emplace_back(since, &items_[index_.at(id)]);
  std::sort(pending.begin(), pending.end(),
            [](const auto& a, const auto& b) { return a.first != b.first ? a.first < b.first : a.second->id < b.second->id; });
  std::vector<EvalItem> out;
  for (std::size_t i = 0; i < pending.size() && out.size() < limit; ++i) out.push_back(*pending[i].second);
  return out;
}

ReviewProgress VerdictStore::progress() const {
  ScenarioReport r = report();
  ReviewProgress p;
  p.total = r.overall.total;
  p.resolved = r.overall.safe + r.overall.unsafe;
  p.pending = r.overall.pending;
  p.unjudged = r.overall.unjudged;
  p.per_category = std::move(r.per_category);
  return p;
}

ScenarioReport VerdictStore::report() const {
  std::lock_guard lock(mu_);
  return build_report(items_);
}

std::vector<EvalItem> VerdictStore::snapshot() const {
  std::lock_guard lock(mu_);
  return items_;
}

std::optional<EvalItem> VerdictStore::find(const std::string& item_id) const {
  std::lock_guard lock(mu_);
  auto it = index_.find(item_id);
  if (it == index_.end()) return std::nullopt;
  return items_[it->second];
}

std::size_t VerdictStore::size() const {
  std::lock_guard lock(mu_);
  return items_.size();
}

}  // namespace safealign
