#include "safealign/diversity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "safealign/error.hpp"
#include "safealign/log.hpp"
#include "safealign/random.hpp"
#include "safealign/text.hpp"

namespace safealign {

using nlohmann::json;

std::optional<std::size_t> DiversityPlan::cap_for(Category c) const {
  auto it = caps.find(c);
  return it != caps.end() ? it->second : default_cap;
}

std::size_t DiversityPlan::floor_for(Category c) const {
  auto it = floors.find(c);
  return it != floors.end() ? it->second : default_floor;
}

std::vector<std::string> DiversityPlan::problems() const {
  std::vector<std::string> out;
  for (const auto& info : all_categories()) {
    auto cap = cap_for(info.category);
    if (cap && *cap == 0) out.push_back("diversity: cap for " + std::string(info.code) + " must be positive");
    if (cap && floor_for(info.category) > *cap) {
      out.push_back("diversity: floor exceeds cap for " + std::string(info.code));
    }
  }
  if (keyword_fraction < 0.0 || derive_fraction < 0.0 || std::abs(keyword_fraction + derive_fraction - 1.0) > 1e-9) {
    out.emplace_back("diversity: generator mix fractions must be non-negative and sum to 1");
  }
  if (!(temperature >= 0.0)) out.emplace_back("diversity: temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) out.emplace_back("diversity: top_p must be in (0, 1]");
  if (per_call == 0) out.emplace_back("diversity: per_call must be >= 1");
  return out;
}

namespace {

json cap_json(const std::optional<std::size_t>& cap) { return cap ? json(*cap) : json("unlimited"); }

std::optional<std::size_t> parse_cap(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "unlimited") return std::nullopt;
    throw Error(Errc::invalid_config, "cap must be a number or \"unlimited\"");
  }
  const auto v = j.get<long long>();
  if (v < 0) throw Error(Errc::invalid_config, "cap must be non-negative");
  return static_cast<std::size_t>(v);
}

Category category_key(const std::string& code) {
  auto c = parse_category(code);
  if (!c) throw Error(Errc::invalid_config, "unknown category '" + code + "'");
  return *c;
}

}  // namespace

void to_json(json& j, const DiversityPlan& p) {
  json caps = json::object();
  for (const auto& [c, v] : p.caps) caps[std::string(code(c))] = cap_json(v);
  json floors = json::object();
  for (const auto& [c, v] : p.floors) floors[std::string(code(c))] = v;
  j = json{{"cap", cap_json(p.default_cap)},
           {"caps", std::move(caps)},
           {"floor", p.default_floor},
           {"floors", std::move(floors)},
           {"budget", p.budget},
           {"generator_mix", {{"keyword_fewshot", p.keyword_fraction}, {"derive_from_existing", p.derive_fraction}}},
           {"seed", p.seed},
           {"temperature", p.temperature},
           {"top_p", p.top_p},
           {"per_call", p.per_call}};
}

void from_json(const json& j, DiversityPlan& p) {
  if (j.contains("cap")) p.default_cap = parse_cap(j["cap"]);
  if (j.contains("caps")) {
    for (const auto& [k, v] : j["caps"].items()) p.caps[category_key(k)] = parse_cap(v);
  }
  p.default_floor = j.value("floor", p.default_floor);
  if (j.contains("floors")) {
    for (const auto& [k, v] : j["floors"].items()) p.floors[category_key(k)] = v.get<std::size_t>();
  }
  p.budget = j.value("budget", p.budget);
  if (j.contains("generator_mix")) {
    p.keyword_fraction = j["generator_mix"].value("keyword_fewshot", p.keyword_fraction);
    p.derive_fraction = j["generator_mix"].value("derive_from_existing", p.derive_fraction);
  }
  p.seed = j.value("seed", p.seed);
  p.temperature = j.value("temperature", p.temperature);
  p.top_p = j.value("top_p", p.top_p);
  p.per_call = j.value("per_call", p.per_call);
}

DiversityPlan default_plan(const std::vector<AlignmentSample>& samples, std::uint64_t seed) {
  std::array<std::size_t, kCategoryCount> counts{};
  for (const auto& s : samples) {
    if (s.category) ++counts[static_cast<std::size_t>(*s.category)];
  }
  std::vector<std::size_t> present;
  for (auto n : counts) {
    if (n > 0) present.push_back(n);
  }
  DiversityPlan plan;
  plan.seed = seed;
  if (present.empty()) return plan;
  std::sort(present.begin(), present.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(present.size())));
  const std::size_t cap = present[std::max<std::size_t>(rank, 1) - 1];
  plan.default_cap = cap;
  plan.default_floor = std::min<std::size_t>(10, cap);
  for (auto n : counts) plan.budget += n < cap ? cap - n : 0;
  return plan;
}

std::vector<AlignmentSample> rejection_sample(const std::vector<AlignmentSample>& samples, const DiversityPlan& plan) {
  std::array<std::vector<const AlignmentSample*>, kCategoryCount> strata;
  for (const auto& s : samples) {
    if (!s.category) throw Error(Errc::invalid_argument, "rejection_sample: sample " + s.id + " has no category");
    strata[static_cast<std::size_t>(*s.category)].push_back(&s);
  }
  std::vector<AlignmentSample> kept;
  for (const auto& info : all_categories()) {
    auto& stratum = strata[static_cast<std::size_t>(info.category)];
    std::sort(stratum.begin(), stratum.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
    const auto cap = plan.cap_for(info.category);
    std::size_t keep = stratum.size();
    if (stratum.size() > plan.floor_for(info.category) && cap) keep = std::min(stratum.size(), *cap);
    if (keep < stratum.size()) {
      Rng rng(derive_seed(plan.seed, info.code));
      seeded_shuffle(stratum, rng);
    }
    for (std::size_t i = 0; i < keep; ++i) kept.push_back(*stratum[i]);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return kept;
}

std::map<Category, std::size_t> allocate_budget(const std::map<Category, std::size_t>& deficits, std::size_t budget) {
  std::map<Category, std::size_t> out;
  const std::size_t total = std::accumulate(deficits.begin(), deficits.end(), std::size_t{0},
                                            [](std::size_t acc, const auto& kv) { return acc + kv.second; });
  if (total == 0 || budget == 0) return out;
  std::vector<std::pair<Category, double>> remainders;
  std::size_t assigned = 0;
  for (const auto& [c, d] : deficits) {
    if (d == 0) continue;
    const double exact = static_cast<double>(budget) * static_cast<double>(d) / static_cast<double>(total);
    const auto whole = static_cast<std::size_t>(std::floor(exact));
    out[c] = whole;
    assigned += whole;
    remainders.emplace_back(c, exact - static_cast<double>(whole));
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  for (std::size_t i = 0; assigned < budget && i < remainders.size(); ++i, ++assigned) ++out[remainders[i].first];
  return out;
}

AlignmentSample to_sample(const AugmentedPrompt& p) {
  AlignmentSample s = AlignmentSample::make(p.text, "augment:" + p.generator);
  s.category = p.category;
  s.augmentation = AugmentationInfo{p.generator, p.seed_material, p.temperature, p.top_p, p.request_seed, p.template_version};
  s.advance(SampleStatus::augmented_origin);
  return s;
}

std::vector<std::string> parse_generated(std::string_view completion) {
  std::vector<std::string> out;
  for (const auto& line : text::split_any(completion, {"\n"})) {
    std::u32string s = text::to_u32(text::trim(line));
    std::size_t i = 0;
    // "(1)" / "（1）"
    if (i < s.size() && (s[i] == U'(' || s[i] == U'（')) {
      std::size_t k = i + 1;
      while (k < s.size() && s[k] >= U'0' && s[k] <= U'9') ++k;
      if (k > i + 1 && k < s.size() && (s[k] == U')' || s[k] == U'）')) i = k + 1;
    }
    // "Q1:" / "1." / "1)" / "1、" / "1:"
    if (i == 0) {
      std::size_t k = i;
      if (k < s.size() && (s[k] == U'Q' || s[k] == U'q')) ++k;
      std::size_t digits_start = k;
      while (k < s.size() && s[k] >= U'0' && s[k] <= U'9') ++k;
      if (k > digits_start && k < s.size() &&
          (s[k] == U'.' || s[k] == U')' || s[k] == U'、' || s[k] == U':' || s[k] == U'：' || s[k] == U'．')) {
        i = k + 1;
      }
    }
    // bullets
    if (i == 0 && i < s.size() && (s[i] == U'-' || s[i] == U'*' || s[i] == U'•')) i = 1;
    std::string cleaned = text::trim(text::to_utf8(std::u32string_view(s).substr(i)));
    const std::size_t n = text::codepoint_count(cleaned);
    if (n >= 8 && n <= 300) out.push_back(std::move(cleaned));
  }
  return out;
}

Augmenter::Augmenter(Gateway& gateway, std::string backend_id, DiversityPlan plan, PromptTemplate keyword_tmpl,
                     PromptTemplate derive_tmpl)
    : gateway_(gateway),
      backend_id_(std::move(backend_id)),
      plan_(std::move(plan)),
      keyword_tmpl_(std::move(keyword_tmpl)),
      derive_tmpl_(std::move(derive_tmpl)) {
  keyword_tmpl_.require_slots({"category", "keywords", "shots", "n"});
  derive_tmpl_.require_slots({"source_prompt", "n"});
}

std::int64_t Augmenter::request_seed(std::string_view stratum, std::size_t round) const {
  const std::uint64_t s = derive_seed(plan_.seed, stratum) + 0x9E3779B97F4A7C15ULL * (round + 1);
  return static_cast<std::int64_t>(s >> 1);
}

ChatRequest Augmenter::keyword_request(Category category, const std::vector<std::string>& keywords,
                                       const std::vector<std::string>& shots, std::size_t n, std::size_t round) const {
  std::string kw;
  for (std::size_t i = 0; i < keywords.size(); ++i) kw += (i ? ", " : "") + keywords[i];
  std::string shot_text;
  for (std::size_t i = 0; i < shots.size(); ++i) shot_text += std::to_string(i + 1) + ". " + shots[i] + "\n";
  ChatRequest req;
  req.backend_id = backend_id_;
  req.messages = {{Role::user, keyword_tmpl_.render({{"category", std::string(display_name(category))},
                                                     {"keywords", kw},
                                                     {"shots", shot_text},
                                                     {"n", std::to_string(n)}})}};
  req.temperature = plan_.temperature;
  req.top_p = plan_.top_p;
  req.max_tokens = 1024;
  req.seed = request_seed(std::string(kKeywordGenerator) + ":" + std::string(code(category)), round);
  return req;
}

ChatRequest Augmenter::derive_request(const AlignmentSample& source, std::size_t n, std::size_t round) const {
  if (!source.category) throw Error(Errc::invalid_argument, "augment_derive: source " + source.id + " has no category");
  ChatRequest req;
  req.backend_id = backend_id_;
  req.messages = {{Role::user, derive_tmpl_.render({{"category", std::string(display_name(*source.category))},
                                                    {"source_prompt", source.prompt},
                                                    {"n", std::to_string(n)}})}};
  req.temperature = plan_.temperature;
  req.top_p = plan_.top_p;
  req.max_tokens = 1024;
  req.seed = request_seed(std::string(kDeriveGenerator) + ":" + source.id, round);
  return req;
}

AugmentOutcome Augmenter::accept(const Completion& c, Category category, std::string_view generator,
                                 std::string seed_material, const ChatRequest& req, const PromptTemplate& tmpl,
                                 std::size_t n, std::unordered_set<std::string>& known_ids) const {
  AugmentOutcome out;
  auto parsed = parse_generated(c.text);
  out.parsed = parsed.size();
  for (auto& textline : parsed) {
    if (out.prompts.size() >= n) break;
    if (!known_ids.insert(sample_id(textline)).second) {
      ++out.dropped_duplicates;
      continue;
    }
    AugmentedPrompt p;
    p.text = std::move(textline);
    p.category = category;
    p.generator = std::string(generator);
    p.seed_material = seed_material;
    p.temperature = req.temperature;
    p.top_p = req.top_p;
    p.request_seed = req.seed.value_or(0);
    p.template_version = tmpl.version;
    out.prompts.push_back(std::move(p));
  }
  out.zero_usable = out.prompts.empty();
  if (out.zero_usable) {
    log::warn("zero_usable_output", {{"generator", generator}, {"category", code(category)}, {"parsed", out.parsed}});
  }
  return out;
}

AugmentOutcome Augmenter::augment_keyword(Category category, const std::vector<std::string>& keywords,
                                          const std::vector<std::string>& shots, std::size_t n,
                                          std::unordered_set<std::string>& known_ids, std::size_t round) const {
  if (n == 0) throw Error(Errc::invalid_argument, "augment_keyword: n must be >= 1");
  // Shots are seed material: a generation that echoes one is not new.
  for (const auto& shot : shots) known_ids.insert(sample_id(shot));
  ChatRequest req = keyword_request(category, keywords, shots, n, round);
  Completion c = gateway_.complete(req);
  std::string material;
  for (std::size_t i = 0; i < keywords.size(); ++i) material += (i ? "," : "") + keywords[i];
  return accept(c, category, kKeywordGenerator, material, req, keyword_tmpl_, n, known_ids);
}

AugmentOutcome Augmenter::augment_derive(const AlignmentSample& source, std::size_t n,
                                         std::unordered_set<std::string>& known_ids, std::size_t round) const {
  if (n == 0) throw Error(Errc::invalid_argument, "augment_derive: n must be >= 1");
  ChatRequest req = derive_request(source, n, round);
  known_ids.insert(source.id);
  Completion c = gateway_.complete(req);
  return accept(c, *source.category, kDeriveGenerator, source.id, req, derive_tmpl_, n, known_ids);
}

}  // namespace safealign
