#include "safealign/assembler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "safealign/corpus.hpp"
#include "safealign/error.hpp"
#include "safealign/jsonl.hpp"
#include "safealign/log.hpp"
#include "safealign/random.hpp"
#include "safealign/text.hpp"

namespace safealign {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string percentile_rule(double p) {
  if (p == std::floor(p)) return "p" + std::to_string(static_cast<long long>(p));
  return "p" + jsonl::dump(json(p));
}

}  // namespace

std::vector<std::string> SelectionPolicy::problems() const {
  std::vector<std::string> out;
  if (tau_ppl && !(*tau_ppl > 0.0)) out.push_back("tau_ppl must be positive");
  if (!(tau_ppl_percentile > 0.0 && tau_ppl_percentile <= 100.0)) out.push_back("tau_ppl percentile must be in (0, 100]");
  if (!(tau_response >= 0.0 && tau_response <= 1.0)) out.push_back("tau_response must be in [0, 1]");
  if (!(tau_instruction >= 0.0 && tau_instruction <= 1.0)) out.push_back("tau_instruction must be in [0, 1]");
  if (!(general_ratio >= 0.0) || !std::isfinite(general_ratio)) out.push_back("general_mix ratio must be >= 0");
  return out;
}

void to_json(json& j, const SelectionPolicy& p) {
  j = json::object();
  if (p.tau_ppl) {
    j["tau_ppl"] = *p.tau_ppl;
  } else {
    j["tau_ppl"] = percentile_rule(p.tau_ppl_percentile);
  }
  j["tau_response"] = p.tau_response;
  j["tau_instruction"] = p.tau_instruction;
  if (p.general_count) {
    j["general_mix"] = {{"count", *p.general_count}};
  } else {
    j["general_mix"] = {{"ratio", p.general_ratio}};
  }
  j["tie_break"] = to_string(p.tie_break);
  j["min_selected"] = p.min_selected;
}

void from_json(const json& j, SelectionPolicy& p) {
  p = SelectionPolicy{};
  if (j.contains("tau_ppl")) {
    const json& t = j["tau_ppl"];
    if (t.is_number()) {
      p.tau_ppl = t.get<double>();
    } else if (t.is_string()) {
      const std::string s = t.get<std::string>();
      if (s.size() < 2 || s[0] != 'p') throw Error(Errc::invalid_config, "tau_ppl must be a number or 'pNN', got '" + s + "'");
      try {
        p.tau_ppl_percentile = std::stod(s.substr(1));
      } catch (const std::exception&) {
        throw Error(Errc::invalid_config, "tau_ppl must be a number or 'pNN', got '" + s + "'");
      }
    } else {
      throw Error(Errc::invalid_config, "tau_ppl must be a number or 'pNN'");
    }
  }
  p.tau_response = j.value("tau_response", p.tau_response);
  p.tau_instruction = j.value("tau_instruction", p.tau_instruction);
  if (j.contains("general_mix")) {
    const json& g = j["general_mix"];
    if (g.is_number()) {
      p.general_ratio = g.get<double>();
    } else if (g.contains("count")) {
      p.general_count = g["count"].get<std::size_t>();
    } else {
      p.general_ratio = g.value("ratio", p.general_ratio);
    }
  }
  if (j.contains("tie_break")) p.tie_break = parse_origin(j["tie_break"].get<std::string>());
  p.min_selected = j.value("min_selected", p.min_selected);
}

double nearest_rank(std::vector<double> values, double p) {
  if (values.empty()) throw Error(Errc::empty_input, "percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double rank = std::ceil(p / 100.0 * static_cast<double>(values.size()));
  const std::size_t idx = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(values.size()))) - 1;
  return values[idx];
}

double resolve_tau_ppl(const std::vector<AlignmentSample>& samples, const SelectionPolicy& policy) {
  if (policy.tau_ppl) return *policy.tau_ppl;
  std::vector<double> ppl;
  for (const auto& s : samples) {
    if (s.features && s.features->prompt_ppl) ppl.push_back(*s.features->prompt_ppl);
  }
  if (ppl.empty()) return std::numeric_limits<double>::infinity();
  return nearest_rank(std::move(ppl), policy.tau_ppl_percentile);
}

namespace {

std::optional<std::string_view> rejection(const AlignmentSample& s, double tau_ppl, const SelectionPolicy& p) {
  if (!s.features) return kRejectMissing;
  const auto& f = *s.features;
  if (!f.prompt_ppl) return kRejectMissing;
  if (!(*f.prompt_ppl <= tau_ppl)) return kRejectPpl;
  auto resp = f.max_response_safety();
  if (!resp) return kRejectMissing;
  if (!(*resp >= p.tau_response)) return kRejectResponse;
  if (!f.instruction_safety) return kRejectMissing;
  if (!(*f.instruction_safety <= p.tau_instruction)) return kRejectInstruction;
  return std::nullopt;
}

}  // namespace

SelectionResult select(std::vector<AlignmentSample> samples, const SelectionPolicy& policy) {
  if (auto problems = policy.problems(); !problems.empty()) throw Error(Errc::invalid_config, problems.front());
  for (const auto& s : samples) {
    if (s.status != SampleStatus::scored) {
      throw Error(Errc::invalid_argument,
                  "select requires scored samples, " + s.id.substr(0, 12) + " is " + std::string(to_string(s.status)));
    }
  }
  SelectionResult r;
  r.tau_ppl = resolve_tau_ppl(samples, policy);
  for (auto& s : samples) {
    if (auto reason = rejection(s, r.tau_ppl, policy)) {
      s.rejection_reason = std::string(*reason);
      s.advance(SampleStatus::rejected);
      ++r.reasons[std::string(*reason)];
      r.rejected.push_back(std::move(s));
    } else {
      s.advance(SampleStatus::selected);
      r.selected.push_back(std::move(s));
    }
  }
  return r;
}

const CandidateResponse& choose_response(const AlignmentSample& sample, Origin tie_break) {
  if (sample.candidates.empty()) throw Error(Errc::invalid_argument, "sample " + sample.id.substr(0, 12) + " has no candidates");
  const CandidateResponse* best = &sample.candidates.front();
  auto score = [](const CandidateResponse& c) { return c.safety_score.value_or(-1.0); };
  for (const auto& c : sample.candidates) {
    if (score(c) > score(*best) || (score(c) == score(*best) && c.origin == tie_break && best->origin != tie_break)) {
      best = &c;
    }
  }
  return *best;
}

std::string_view to_string(ExportFormat f) noexcept { return f == ExportFormat::instruction ? "instruction" : "conversation"; }

ExportFormat parse_export_format(std::string_view s) {
  if (s == "instruction") return ExportFormat::instruction;
  if (s == "conversation") return ExportFormat::conversation;
  throw Error(Errc::unknown_format, "unknown export format '" + std::string(s) + "'");
}

json to_export_json(const SftRecord& r, ExportFormat format) {
  if (format == ExportFormat::instruction) return json{{"instruction", r.instruction}, {"response", r.response}, {"meta", r.meta}};
  return json{{"messages", json::array({{{"role", "user"}, {"content", r.instruction}},
                                        {{"role", "assistant"}, {"content", r.response}}})},
              {"meta", r.meta}};
}

std::vector<SftRecord> load_general(const fs::path& path, std::size_t* malformed) {
  std::vector<SftRecord> out;
  std::size_t bad = 0;
  jsonl::for_each_line(path, [&](std::size_t line_no, std::string_view line) {
    std::optional<std::pair<std::string, std::string>> turn;
    try {
      turn = parse_chat_record(json::parse(line));
    } catch (const json::exception&) {
    }
    if (!turn || text::normalize(turn->first).empty() || text::normalize(turn->second).empty()) {
      ++bad;
      log::warn("general_record_malformed", {{"path", path.string()}, {"line", line_no}});
      return;
    }
    out.push_back({std::move(turn->first), std::move(turn->second), json{{"source", "general"}}});
  });
  if (malformed) *malformed = bad;
  return out;
}

std::string ratio_string(std::size_t a, std::size_t b) {
  const std::size_t g = std::gcd(a, b);
  if (g == 0) return "0:0";
  return std::to_string(a / g) + ":" + std::to_string(b / g);
}

namespace {

json feature_snapshot(const SafetyFeatureVector& f) {
  auto opt = [](const auto& v) { return v ? json(*v) : json(nullptr); };
  return json{{"prompt_ppl", opt(f.prompt_ppl)},
              {"response_safety", opt(f.response_safety)},
              {"instruction_safety", opt(f.instruction_safety)}};
}

json training_block(const std::string& base_model) {
  return json{{"base_model", base_model},
              {"finetuning", "full"},
              {"learning_rate", 6e-7},
              {"per_device_batch_size", 1},
              {"gradient_accumulation_steps", 50},
              {"warmup_ratio", 0.0005},
              {"lr_scheduler", "cosine"},
              {"epochs", 3}};
}

}  // namespace

ExportResult mix_and_export(const SelectionResult& selection, const SelectionPolicy& policy, const ExportOptions& options,
                            const fs::path& out_dir) {
  if (selection.selected.size() < policy.min_selected) {
    throw Error(Errc::invalid_argument, "selected " + std::to_string(selection.selected.size()) +
                                            " samples, below the configured floor of " +
                                            std::to_string(policy.min_selected));
  }
  ExportResult r;
  std::map<std::string, std::size_t> by_category, by_source, by_origin;
  for (const auto& s : selection.selected) {
    const CandidateResponse& c = choose_response(s, policy.tie_break);
    const std::string cat = s.category ? std::string(code(*s.category)) : std::string("other");
    json meta = {{"category", cat}, {"source", s.source}, {"origin", to_string(c.origin)}, {"id", s.id}};
    if (s.features) meta["features"] = feature_snapshot(*s.features);
    r.records.push_back({s.prompt, c.text, std::move(meta)});
    ++by_category[cat];
    ++by_source[s.source];
    ++by_origin[std::string(to_string(c.origin))];
  }
  r.safety_count = r.records.size();

  std::size_t want = policy.general_count.value_or(
      static_cast<std::size_t>(std::llround(policy.general_ratio * static_cast<double>(r.safety_count))));
  std::size_t general_available = 0;
  std::size_t general_malformed = 0;
  if (want > 0) {
    if (!options.general_corpus) throw Error(Errc::invalid_config, "general_mix > 0 but no general corpus configured");
    std::vector<SftRecord> general = load_general(*options.general_corpus, &general_malformed);
    general_available = general.size();
    Rng rng(derive_seed(options.seed, "general"));
    seeded_shuffle(general, rng);
    if (general.size() < want) {
      log::warn("general_corpus_short", {{"wanted", want}, {"available", general.size()}});
      want = general.size();
    }
    for (std::size_t i = 0; i < want; ++i) r.records.push_back(std::move(general[i]));
  }
  r.general_count = want;
  by_source["general"] += r.general_count;

  Rng mix(derive_seed(options.seed, "mix"));
  seeded_shuffle(r.records, mix);

  std::string content;
  for (const auto& rec : r.records) {
    content += jsonl::dump(to_export_json(rec, options.format));
    content += '\n';
  }
  fs::create_directories(out_dir);
  jsonl::atomic_write(out_dir / "dataset.jsonl", content);

  json thresholds = {{"tau_ppl", std::isfinite(selection.tau_ppl) ? json(selection.tau_ppl) : json(nullptr)},
                     {"tau_ppl_rule", policy.tau_ppl ? std::string("absolute")
                                                     : percentile_rule(policy.tau_ppl_percentile)},
                     {"tau_response", policy.tau_response},
                     {"tau_instruction", policy.tau_instruction}};
  r.manifest = json{{"format", to_string(options.format)},
                    {"seed", options.seed},
                    {"total", r.records.size()},
                    {"safety_count", r.safety_count},
                    {"general_count", r.general_count},
                    {"ratio", ratio_string(r.safety_count, r.general_count)},
                    {"general_available", general_available},
                    {"general_malformed", general_malformed},
                    {"selected", selection.selected.size()},
                    {"rejected", selection.rejected.size()},
                    {"rejections", selection.reasons},
                    {"counts_by_category", by_category},
                    {"counts_by_source", by_source},
                    {"counts_by_origin", by_origin},
                    {"thresholds", std::move(thresholds)},
                    {"template_versions", options.template_versions},
                    {"dataset_file", "dataset.jsonl"},
                    {"dataset_sha256", text::sha256_hex(content)},
                    {"training", training_block(options.base_model)}};
  jsonl::atomic_write(out_dir / "manifest.json", r.manifest.dump(2) + "\n");
  return r;
}

}  // namespace safealign
