#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "safealign/sample.hpp"

namespace safealign {

enum class AdapterKind { safety_prompts, cvalues_comparison, generic_chat };

std::string_view to_string(AdapterKind k) noexcept;
/// Throws Errc::unknown_adapter.
AdapterKind parse_adapter(std::string_view s);

struct CorpusCounts {
  std::size_t read = 0;
  std::size_t kept = 0;
  std::size_t deduped = 0;
  std::size_t malformed = 0;
  std::size_t negatives_discarded = 0;  // pair corpora only; not part of the read balance

  bool balanced() const { return read == kept + deduped + malformed; }
};

struct CorpusManifest {
  std::string source;
  AdapterKind adapter = AdapterKind::generic_chat;
  std::filesystem::path path;
  CorpusCounts counts;
};

void to_json(nlohmann::json& j, const CorpusManifest& m);

struct IngestResult {
  std::vector<AlignmentSample> samples;
  CorpusManifest manifest;
};

/// Reads one corpus file. Malformed records are counted and logged, never
/// fatal; duplicates within the file are dropped first-wins.
/// Throws Errc::unreadable_path.
IngestResult ingest(CorpusManifest manifest);

/// At most one sample per normalized-prompt hash, first occurrence wins,
/// input order preserved.
std::vector<AlignmentSample> dedup(std::vector<AlignmentSample> samples);

/// Ingests every manifest (in parallel, one worker per file) and then dedups
/// across corpora single-threaded in manifest order. Cross-corpus duplicates
/// are charged to the later manifest's `deduped` count.
std::vector<IngestResult> ingest_all(std::vector<CorpusManifest> manifests, std::size_t workers = 4);

/// First user turn and the assistant turn that follows it. Accepts
/// {"messages":[{role,content}]}, ShareGPT {"conversations":[{from,value}]},
/// and {"instruction","input"?,"output"}.
std::optional<std::pair<std::string, std::string>> parse_chat_record(const nlohmann::json& record);

}  // namespace safealign
