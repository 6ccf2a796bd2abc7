#include "safealign/corpus.hpp"

#include <unordered_set>

#include "safealign/error.hpp"
#include "safealign/jsonl.hpp"
#include "safealign/log.hpp"
#include "safealign/parallel.hpp"
#include "safealign/text.hpp"

namespace safealign {

using nlohmann::json;

std::string_view to_string(AdapterKind k) noexcept {
  switch (k) {
    case AdapterKind::safety_prompts: return "safety-prompts";
    case AdapterKind::cvalues_comparison: return "cvalues-comparison";
    case AdapterKind::generic_chat: return "generic-chat";
  }
  return "generic-chat";
}

AdapterKind parse_adapter(std::string_view s) {
  if (s == "safety-prompts") return AdapterKind::safety_prompts;
  if (s == "cvalues-comparison") return AdapterKind::cvalues_comparison;
  if (s == "generic-chat") return AdapterKind::generic_chat;
  throw Error(Errc::unknown_adapter, "unknown adapter '" + std::string(s) + "'");
}

void to_json(json& j, const CorpusManifest& m) {
  j = json{{"source", m.source},
           {"adapter", to_string(m.adapter)},
           {"path", m.path.string()},
           {"counts",
            {{"read", m.counts.read},
             {"kept", m.counts.kept},
             {"deduped", m.counts.deduped},
             {"malformed", m.counts.malformed},
             {"negatives_discarded", m.counts.negatives_discarded}}}};
}

namespace {

std::optional<std::string> string_field(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) return std::nullopt;
  return j[key].get<std::string>();
}

std::optional<std::string> non_empty(std::optional<std::string> s) {
  if (s && text::normalize(*s).empty()) return std::nullopt;
  return s;
}

// Returns nullopt for a malformed record.
std::optional<AlignmentSample> map_record(const json& j, const CorpusManifest& m, bool& discarded_negative) {
  if (!j.is_object()) return std::nullopt;
  std::optional<std::string> prompt;
  std::optional<std::string> response;
  std::optional<std::string> scenario;
  switch (m.adapter) {
    case AdapterKind::safety_prompts:
      prompt = string_field(j, "prompt");
      response = non_empty(string_field(j, "response"));
      scenario = non_empty(string_field(j, "type"));
      break;
    case AdapterKind::cvalues_comparison:
      prompt = string_field(j, "prompt");
      response = non_empty(string_field(j, "pos_resp"));
      discarded_negative = non_empty(string_field(j, "neg_resp")).has_value();
      break;
    case AdapterKind::generic_chat:
      if (auto pair = parse_chat_record(j)) {
        prompt = pair->first;
        response = non_empty(pair->second);
      }
      break;
  }
  if (!prompt || text::normalize(*prompt).empty()) return std::nullopt;
  AlignmentSample s = AlignmentSample::make(*prompt, m.source);
  if (response) {
    s.original_response = text::trim(*response);
    s.candidates.push_back({*s.original_response, Origin::original, std::nullopt});
  }
  s.source_scenario = scenario;
  return s;
}

}  // namespace

std::optional<std::pair<std::string, std::string>> parse_chat_record(const json& j) {
  if (!j.is_object()) return std::nullopt;
  auto turns = [&](const char* key, const char* role_key, const char* text_key, std::string_view user,
                   std::string_view assistant) -> std::optional<std::pair<std::string, std::string>> {
    if (!j.contains(key) || !j[key].is_array()) return std::nullopt;
    const json& arr = j[key];
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (!arr[i].is_object() || arr[i].value(role_key, "") != user) continue;
      std::string prompt = arr[i].value(text_key, "");
      std::string reply;
      if (i + 1 < arr.size() && arr[i + 1].is_object() && arr[i + 1].value(role_key, "") == assistant) {
        reply = arr[i + 1].value(text_key, "");
      }
      return std::make_pair(prompt, reply);
    }
    return std::nullopt;
  };
  try {
    if (auto p = turns("messages", "role", "content", "user", "assistant")) return p;
    if (auto p = turns("conversations", "from", "value", "human", "gpt")) return p;
    if (j.contains("instruction") && j["instruction"].is_string()) {
      std::string prompt = j["instruction"].get<std::string>();
      if (auto input = string_field(j, "input"); input && !text::normalize(*input).empty()) prompt += "\n" + *input;
      return std::make_pair(prompt, string_field(j, "output").value_or(""));
    }
  } catch (const json::exception&) {
    return std::nullopt;
  }
  return std::nullopt;
}

IngestResult ingest(CorpusManifest manifest) {
  IngestResult result;
  manifest.counts = {};
  std::unordered_set<std::string> seen;
  jsonl::for_each_line(manifest.path, [&](std::size_t number, std::string_view line) {
    ++manifest.counts.read;
    std::optional<AlignmentSample> sample;
    bool negative = false;
    try {
      sample = map_record(json::parse(line), manifest, negative);
    } catch (const json::exception&) {
      sample.reset();
    }
    if (!sample) {
      ++manifest.counts.malformed;
      log::warn("malformed_record", {{"source", manifest.source}, {"path", manifest.path.string()}, {"line", number}});
      return;
    }
    if (negative) ++manifest.counts.negatives_discarded;
    if (!seen.insert(sample->id).second) {
      ++manifest.counts.deduped;
      return;
    }
    ++manifest.counts.kept;
    result.samples.push_back(std::move(*sample));
  });
  result.manifest = std::move(manifest);
  return result;
}

std::vector<AlignmentSample> dedup(std::vector<AlignmentSample> samples) {
  std::unordered_set<std::string> seen;
  std::vector<AlignmentSample> out;
  out.reserve(samples.size());
  for (auto& s : samples) {
    if (seen.insert(sample_id(s.prompt)).second) out.push_back(std::move(s));
  }
  return out;
}

std::vector<IngestResult> ingest_all(std::vector<CorpusManifest> manifests, std::size_t workers) {
  std::vector<IngestResult> results(manifests.size());
  parallel_for(manifests.size(), workers, [&](std::size_t i) { results[i] = ingest(manifests[i]); });
  std::unordered_set<std::string> seen;
  for (auto& r : results) {
    std::vector<AlignmentSample> kept;
    kept.reserve(r.samples.size());
    for (auto& s : r.samples) {
      if (seen.insert(s.id).second) {
        kept.push_back(std::move(s));
      } else {
        --r.manifest.counts.kept;
        ++r.manifest.counts.deduped;
      }
    }
    r.samples = std::move(kept);
  }
  return results;
}

}  // namespace safealign
