#include "safealign/intent.hpp"

#include <algorithm>
#include <unordered_set>

#include "safealign/error.hpp"
#include "safealign/jsonl.hpp"
#include "safealign/log.hpp"
#include "safealign/text.hpp"

namespace safealign {

using nlohmann::json;

std::string_view to_string(UnmappedPolicy p) noexcept {
  return p == UnmappedPolicy::bucket_other ? "bucket-other" : "hold-for-review";
}

std::string IntentTaxonomy::key(std::string_view raw_label) {
  std::string s = text::ascii_lower(raw_label);
  std::replace(s.begin(), s.end(), '_', ' ');
  return text::normalize(s);
}

IntentTaxonomy IntentTaxonomy::builtin() { return parse(json::parse(builtin_data("taxonomy"))); }

IntentTaxonomy IntentTaxonomy::load(const std::filesystem::path& path) {
  try {
    return parse(json::parse(jsonl::read_file(path)));
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_config, path.string() + ": " + e.what());
  }
}

IntentTaxonomy IntentTaxonomy::parse(const json& doc) {
  IntentTaxonomy t;
  t.version_ = doc.value("version", "unversioned");
  const std::string policy = doc.value("unmapped_policy", "bucket-other");
  if (policy == "bucket-other") {
    t.policy_ = UnmappedPolicy::bucket_other;
  } else if (policy == "hold-for-review") {
    t.policy_ = UnmappedPolicy::hold_for_review;
  } else {
    throw Error(Errc::invalid_config, "unknown unmapped_policy '" + policy + "'");
  }
  std::array<bool, kCategoryCount> seen{};
  for (const auto& c : doc.at("categories")) {
    const std::string code = c.at("code").get<std::string>();
    auto cat = parse_category(code);
    if (!cat) throw Error(Errc::invalid_config, "taxonomy category '" + code + "' is not one of the 14 codes");
    seen[static_cast<std::size_t>(*cat)] = true;
    t.definitions_[static_cast<std::size_t>(*cat)] = c.value("definition", "");
  }
  if (std::count(seen.begin(), seen.end(), true) != static_cast<long>(kCategoryCount)) {
    throw Error(Errc::invalid_config, "taxonomy must define exactly the 14 categories");
  }
  for (const auto& entry : doc.at("normalization_map")) {
    const std::string code = entry.at("category").get<std::string>();
    auto cat = parse_category(code);
    if (!cat) throw Error(Errc::invalid_config, "normalization_map target '" + code + "' is not a category");
    t.add(entry.at("label").get<std::string>(), *cat);
  }
  return t;
}

std::optional<Category> IntentTaxonomy::lookup(std::string_view raw_label) const {
  auto it = map_.find(key(raw_label));
  if (it == map_.end()) return std::nullopt;
  return it->second;
}

void IntentTaxonomy::add(std::string_view raw_label, Category category) { map_.insert_or_assign(key(raw_label), category); }

NormalizeResult normalize_labels(const std::vector<std::string>& raw_labels, const IntentTaxonomy& taxonomy) {
  NormalizeResult r;
  std::vector<Category> mapped;
  for (const auto& label : raw_labels) {
    if (auto c = taxonomy.lookup(label)) {
      if (std::find(mapped.begin(), mapped.end(), *c) == mapped.end()) mapped.push_back(*c);
    } else if (label != kUnlabeled) {
      r.unmapped.push_back(label);
    }
  }
  if (mapped.empty()) return r;
  auto primary = std::min_element(mapped.begin(), mapped.end());
  r.category = *primary;
  for (auto c : mapped) {
    if (c != *r.category) r.secondary.push_back(c);
  }
  return r;
}

void apply_normalization(AlignmentSample& sample, const NormalizeResult& result) {
  sample.category = result.category;
  sample.secondary_categories = result.secondary;
  sample.unmapped_labels = result.unmapped;
}

namespace {

bool is_terminator(char32_t c) { return c == U'.' || c == U'。' || c == U'!' || c == U'！' || c == U'?' || c == U'？'; }

bool is_wrapper(char32_t c) {
  static constexpr std::u32string_view kWrappers = U"\"'`“”‘’「」『』【】[]()（）《》<>*•·-:：";
  return kWrappers.find(c) != std::u32string_view::npos;
}

std::u32string strip_segment(std::u32string s) {
  auto trim_ws = [](std::u32string& v) {
    while (!v.empty() && text::is_space(v.front())) v.erase(v.begin());
    while (!v.empty() && text::is_space(v.back())) v.pop_back();
  };
  trim_ws(s);
  // list numbering: "1." "2)" "3、"
  std::size_t digits = 0;
  while (digits < s.size() && s[digits] >= U'0' && s[digits] <= U'9') ++digits;
  if (digits > 0 && digits < s.size() && (s[digits] == U'.' || s[digits] == U')' || s[digits] == U'、')) {
    s.erase(0, digits + 1);
  }
  trim_ws(s);
  while (!s.empty() && (is_wrapper(s.front()) || text::is_space(s.front()))) s.erase(s.begin());
  while (!s.empty() && (is_wrapper(s.back()) || is_terminator(s.back()) || text::is_space(s.back()))) s.pop_back();
  return s;
}

bool is_short_label(const std::u32string& seg) {
  bool cjk = std::any_of(seg.begin(), seg.end(), text::is_cjk);
  if (cjk) return seg.size() <= 12;
  std::size_t words = 0;
  bool in_word = false;
  for (char32_t c : seg) {
    if (text::is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++words;
    }
  }
  return words <= 4 && seg.size() <= 40;
}

bool has_internal_sentence_break(const std::u32string& s) {
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    if (!is_terminator(s[i])) continue;
    // skip decimals like 0.5 and abbreviations without a following space
    if (s[i] == U'.' && !text::is_space(s[i + 1])) continue;
    // list numbering "2. " at the start of a line
    if (s[i] == U'.') {
      std::size_t k = i;
      while (k > 0 && s[k - 1] >= U'0' && s[k - 1] <= U'9') --k;
      if (k < i && (k == 0 || s[k - 1] == U'\n')) continue;
    }
    for (std::size_t k = i + 1; k < s.size(); ++k) {
      if (!text::is_space(s[k]) && !is_terminator(s[k])) return true;
    }
  }
  return false;
}

}  // namespace

LabelParse parse_labels(std::string_view completion) {
  LabelParse out;
  std::u32string body = text::to_u32(text::trim(completion));
  for (std::u32string_view prefix : {std::u32string_view(U"labels:"), std::u32string_view(U"label:"),
                                     std::u32string_view(U"标签："), std::u32string_view(U"标签:")}) {
    std::u32string lower = text::to_u32(text::ascii_lower(text::to_utf8(body.substr(0, prefix.size()))));
    if (lower == prefix) {
      body.erase(0, prefix.size());
      break;
    }
  }
  const bool prose = has_internal_sentence_break(body);
  std::vector<std::string> segments =
      text::split_any(text::to_utf8(body), {",", "，", "、", ";", "；", "\n"});
  std::size_t non_empty = 0;
  std::vector<std::string> labels;
  for (const auto& raw : segments) {
    std::u32string seg = strip_segment(text::to_u32(raw));
    if (seg.empty()) continue;
    ++non_empty;
    if (!is_short_label(seg)) continue;
    std::string label = text::normalize(text::ascii_lower(text::to_utf8(seg)));
    if (std::find(labels.begin(), labels.end(), label) == labels.end()) labels.push_back(std::move(label));
  }
  if (prose || labels.empty() || labels.size() * 2 < non_empty) {
    out.labels = {std::string(kUnlabeled)};
    out.warning = true;
    return out;
  }
  out.labels = std::move(labels);
  return out;
}

IntentTagger::IntentTagger(Gateway& gateway, std::string backend_id, PromptTemplate tmpl)
    : gateway_(gateway), backend_id_(std::move(backend_id)), tmpl_(std::move(tmpl)) {
  tmpl_.require_slots({"instruction"});
}

ChatRequest IntentTagger::build_request(const AlignmentSample& sample) const {
  ChatRequest req;
  req.backend_id = backend_id_;
  req.messages = {{Role::user, tmpl_.render({{"instruction", sample.prompt}})}};
  req.temperature = 0.0;
  req.top_p = 1.0;
  req.max_tokens = 64;
  return req;
}

std::vector<std::string> IntentTagger::tag(AlignmentSample& sample) const {
  if (sample.status != SampleStatus::raw) {
    throw Error(Errc::invalid_argument, "tag_intent requires a raw sample, got " + std::string(to_string(sample.status)));
  }
  Completion c = gateway_.complete(build_request(sample));
  LabelParse parsed = parse_labels(c.text);
  if (parsed.warning) log::warn("unlabeled_completion", {{"sample", sample.id}, {"chars", text::codepoint_count(c.text)}});
  sample.intent_labels = parsed.labels;
  sample.advance(SampleStatus::tagged);
  return parsed.labels;
}

LabelHistogram histogram(const std::vector<AlignmentSample>& samples, std::size_t k) {
  LabelHistogram h;
  for (const auto& s : samples) {
    for (const auto& label : s.intent_labels) {
      ++h.raw[label];
      ++h.total;
    }
    if (s.category) ++h.category[std::string(code(*s.category))];
  }
  std::vector<std::pair<std::string, std::size_t>> all(h.raw.begin(), h.raw.end());
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (all.size() > k) all.resize(k);
  h.top_k = std::move(all);
  return h;
}

void to_json(json& j, const LabelHistogram& h) {
  json top = json::array();
  for (const auto& [label, count] : h.top_k) top.push_back({{"label", label}, {"count", count}});
  j = json{{"total", h.total}, {"raw", h.raw}, {"category", h.category}, {"top_k", std::move(top)}};
}

}  // namespace safealign
