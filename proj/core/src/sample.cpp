#include "safealign/sample.hpp"

#include <algorithm>
#include <cstdio>

#include "safealign/error.hpp"
#include "safealign/jsonl.hpp"
#include "safealign/text.hpp"

namespace safealign {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(Origin o) noexcept { return o == Origin::original ? "original" : "regenerated"; }

Origin parse_origin(std::string_view s) {
  if (s == "original") return Origin::original;
  if (s == "regenerated") return Origin::regenerated;
  throw Error(Errc::invalid_argument, "unknown origin '" + std::string(s) + "'");
}

std::string_view to_string(SampleStatus s) noexcept {
  switch (s) {
    case SampleStatus::raw: return "raw";
    case SampleStatus::tagged: return "tagged";
    case SampleStatus::augmented_origin: return "augmented-origin";
    case SampleStatus::scored: return "scored";
    case SampleStatus::selected: return "selected";
    case SampleStatus::rejected: return "rejected";
  }
  return "raw";
}

SampleStatus parse_status(std::string_view s) {
  for (auto st : {SampleStatus::raw, SampleStatus::tagged, SampleStatus::augmented_origin, SampleStatus::scored,
                  SampleStatus::selected, SampleStatus::rejected}) {
    if (to_string(st) == s) return st;
  }
  throw Error(Errc::invalid_argument, "unknown status '" + std::string(s) + "'");
}

namespace {

int rank(SampleStatus s) {
  switch (s) {
    case SampleStatus::raw: return 0;
    case SampleStatus::tagged:
    case SampleStatus::augmented_origin: return 1;
    case SampleStatus::scored: return 2;
    case SampleStatus::selected:
    case SampleStatus::rejected: return 3;
  }
  return 0;
}

template <class T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <class T>
std::optional<T> get_opt(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<T>();
}

}  // namespace

std::optional<double> SafetyFeatureVector::max_response_safety() const {
  if (!response_safety || response_safety->empty()) return std::nullopt;
  return *std::max_element(response_safety->begin(), response_safety->end());
}

std::string sample_id(std::string_view prompt) { return text::sha256_hex(text::normalize(prompt)); }

AlignmentSample AlignmentSample::make(std::string_view prompt, std::string source) {
  std::string trimmed = text::trim(prompt);
  if (text::normalize(trimmed).empty()) throw Error(Errc::invalid_argument, "prompt is empty after normalization");
  AlignmentSample s;
  s.id = sample_id(trimmed);
  s.prompt = std::move(trimmed);
  s.source = std::move(source);
  return s;
}

void AlignmentSample::advance(SampleStatus to) {
  if (to == status) return;
  if (rank(to) <= rank(status)) {
    throw Error(Errc::invalid_argument, "sample " + id.substr(0, 12) + ": illegal status transition " +
                                            std::string(to_string(status)) + " -> " + std::string(to_string(to)));
  }
  status = to;
}

void to_json(json& j, const CandidateResponse& c) {
  j = json{{"text", c.text}, {"origin", to_string(c.origin)}, {"safety_score", opt(c.safety_score)}};
}

void from_json(const json& j, CandidateResponse& c) {
  c.text = j.at("text").get<std::string>();
  c.origin = parse_origin(j.at("origin").get<std::string>());
  c.safety_score = get_opt<double>(j, "safety_score");
}

void to_json(json& j, const SafetyFeatureVector& f) {
  j = json{{"prompt_ppl", opt(f.prompt_ppl)},
           {"response_safety", opt(f.response_safety)},
           {"instruction_safety", opt(f.instruction_safety)},
           {"provenance",
            {{"ppl_scorer", f.provenance.ppl_scorer},
             {"response_backend", f.provenance.response_backend},
             {"response_template", f.provenance.response_template},
             {"instruction_backend", f.provenance.instruction_backend},
             {"instruction_template", f.provenance.instruction_template},
             {"degenerate_pair", f.provenance.degenerate_pair},
             {"failures", f.provenance.failures}}}};
}

void from_json(const json& j, SafetyFeatureVector& f) {
  f.prompt_ppl = get_opt<double>(j, "prompt_ppl");
  f.response_safety = get_opt<std::vector<double>>(j, "response_safety");
  f.instruction_safety = get_opt<double>(j, "instruction_safety");
  if (j.contains("provenance")) {
    const json& p = j["provenance"];
    f.provenance.ppl_scorer = p.value("ppl_scorer", "");
    f.provenance.response_backend = p.value("response_backend", "");
    f.provenance.response_template = p.value("response_template", "");
    f.provenance.instruction_backend = p.value("instruction_backend", "");
    f.provenance.instruction_template = p.value("instruction_template", "");
    f.provenance.degenerate_pair = p.value("degenerate_pair", false);
    f.provenance.failures = p.value("failures", std::vector<std::string>{});
  }
}

void to_json(json& j, const AlignmentSample& s) {
  json secondary = json::array();
  for (auto c : s.secondary_categories) secondary.push_back(code(c));
  j = json{{"id", s.id},
           {"prompt", s.prompt},
           {"original_response", opt(s.original_response)},
           {"source", s.source},
           {"source_scenario", opt(s.source_scenario)},
           {"intent_labels", s.intent_labels},
           {"category", s.category ? json(code(*s.category)) : json(nullptr)},
           {"candidates", s.candidates},
           {"features", s.features ? json(*s.features) : json(nullptr)},
           {"status", to_string(s.status)},
           {"secondary_categories", std::move(secondary)},
           {"unmapped_labels", s.unmapped_labels},
           {"regen_rationale", opt(s.regen_rationale)},
           {"regen_warning", s.regen_warning},
           {"rejection_reason", opt(s.rejection_reason)}};
  if (s.augmentation) {
    const auto& a = *s.augmentation;
    j["augmentation"] = {{"generator", a.generator},
                         {"seed_material", a.seed_material},
                         {"temperature", a.temperature},
                         {"top_p", a.top_p},
                         {"request_seed", a.request_seed},
                         {"template_version", a.template_version}};
  } else {
    j["augmentation"] = nullptr;
  }
}

void from_json(const json& j, AlignmentSample& s) {
  s = AlignmentSample{};
  s.id = j.at("id").get<std::string>();
  s.prompt = j.at("prompt").get<std::string>();
  s.original_response = get_opt<std::string>(j, "original_response");
  s.source = j.at("source").get<std::string>();
  s.source_scenario = get_opt<std::string>(j, "source_scenario");
  s.intent_labels = j.value("intent_labels", std::vector<std::string>{});
  if (auto c = get_opt<std::string>(j, "category")) {
    s.category = parse_category(*c);
    if (!s.category) throw Error(Errc::invalid_argument, "unknown category '" + *c + "'");
  }
  s.candidates = j.value("candidates", std::vector<CandidateResponse>{});
  if (j.contains("features") && !j["features"].is_null()) s.features = j["features"].get<SafetyFeatureVector>();
  s.status = parse_status(j.at("status").get<std::string>());
  for (const auto& c : j.value("secondary_categories", std::vector<std::string>{})) {
    if (auto cat = parse_category(c)) s.secondary_categories.push_back(*cat);
  }
  s.unmapped_labels = j.value("unmapped_labels", std::vector<std::string>{});
  s.regen_rationale = get_opt<std::string>(j, "regen_rationale");
  s.regen_warning = j.value("regen_warning", false);
  s.rejection_reason = get_opt<std::string>(j, "rejection_reason");
  if (j.contains("augmentation") && !j["augmentation"].is_null()) {
    const json& a = j["augmentation"];
    AugmentationInfo info;
    info.generator = a.at("generator").get<std::string>();
    info.seed_material = a.at("seed_material").get<std::string>();
    info.temperature = a.value("temperature", 1.0);
    info.top_p = a.value("top_p", 0.95);
    info.request_seed = a.value("request_seed", std::int64_t{0});
    info.template_version = a.value("template_version", "");
    s.augmentation = std::move(info);
  }
}

void write_store(const fs::path& dir, const std::vector<AlignmentSample>& samples, std::size_t shard_size) {
  if (shard_size == 0) throw Error(Errc::invalid_argument, "shard_size must be positive");
  fs::create_directories(dir);
  json shards = json::array();
  for (std::size_t start = 0, n = 0; start < samples.size() || (samples.empty() && n == 0); start += shard_size, ++n) {
    char name[32];
    std::snprintf(name, sizeof(name), "shard-%05zu.jsonl", n);
    std::string content;
    const std::size_t end = std::min(samples.size(), start + shard_size);
    for (std::size_t i = start; i < end; ++i) {
      content += jsonl::dump(json(samples[i]));
      content += '\n';
    }
    jsonl::atomic_write(dir / name, content);
    shards.push_back({{"file", name}, {"count", end - start}, {"sha256", text::sha256_hex(content)}});
    if (samples.empty()) break;
  }
  json index = {{"format", "safealign-sample-store"}, {"version", 1}, {"total", samples.size()}, {"shards", shards}};
  jsonl::atomic_write(dir / "index.json", index.dump(2) + "\n");
}

std::vector<AlignmentSample> read_store(const fs::path& dir) {
  json index;
  try {
    index = json::parse(jsonl::read_file(dir / "index.json"));
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_argument, (dir / "index.json").string() + ": " + e.what());
  }
  std::vector<AlignmentSample> out;
  out.reserve(index.value("total", std::size_t{0}));
  for (const auto& shard : index.at("shards")) {
    const fs::path file = dir / shard.at("file").get<std::string>();
    for (const auto& row : jsonl::read_all(file)) out.push_back(row.get<AlignmentSample>());
  }
  if (out.size() != index.value("total", out.size())) {
    throw Error(Errc::invalid_argument, dir.string() + ": index total does not match shard contents");
  }
  return out;
}

}  // namespace safealign
