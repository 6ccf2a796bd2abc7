#include <gtest/gtest.h>

#include <map>
#include <random>

#include "safealign/corpus.hpp"
#include "safealign/error.hpp"
#include "safealign/jsonl.hpp"
#include "safealign/text.hpp"
#include "test_support.hpp"

namespace safealign {
namespace {

using nlohmann::json;
using testing::TempDir;

std::string lines(const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + "\n";
  return out;
}

CorpusManifest manifest(std::string source, AdapterKind kind, std::filesystem::path path) {
  CorpusManifest m;
  m.source = std::move(source);
  m.adapter = kind;
  m.path = std::move(path);
  return m;
}

TEST(Corpus, SafetyPromptsAdapterCountsMalformedAndDuplicates) {
  TempDir dir;
  std::string content = lines({{{"prompt", "How to insult my boss"}, {"response", "Please don't."}, {"type", "Insult"}},
                               {{"prompt", "How  to insult my boss "}, {"response", "dup"}},
                               {{"response", "no prompt"}},
                               {{"prompt", "   "}},
                               {{"prompt", "Another prompt"}, {"response", ""}}});
  content += "{not json\n";
  auto r = ingest(manifest("sp", AdapterKind::safety_prompts, dir.write("sp.jsonl", content)));
  const auto& c = r.manifest.counts;
  EXPECT_EQ(c.read, 6u);
  EXPECT_EQ(c.kept, 2u);
  EXPECT_EQ(c.deduped, 1u);
  EXPECT_EQ(c.malformed, 3u);
  EXPECT_TRUE(c.balanced());
  ASSERT_EQ(r.samples.size(), 2u);
  EXPECT_EQ(r.samples[0].source_scenario, "Insult");
  EXPECT_EQ(r.samples[0].original_response, "Please don't.");
  ASSERT_EQ(r.samples[0].candidates.size(), 1u);
  EXPECT_EQ(r.samples[0].candidates[0].origin, Origin::original);
  EXPECT_FALSE(r.samples[1].original_response.has_value());
  EXPECT_TRUE(r.samples[1].candidates.empty());
}

TEST(Corpus, CValuesKeepsPositiveAndDiscardsNegative) {
  TempDir dir;
  auto path = dir.write("cv.jsonl", lines({{{"prompt", "p1"}, {"pos_resp", "good"}, {"neg_resp", "bad"}},
                                           {{"prompt", "p2"}, {"pos_resp", "good2"}}}));
  auto r = ingest(manifest("cv", AdapterKind::cvalues_comparison, path));
  EXPECT_EQ(r.manifest.counts.kept, 2u);
  EXPECT_EQ(r.manifest.counts.negatives_discarded, 1u);
  EXPECT_EQ(r.samples[0].original_response, "good");
  for (const auto& s : r.samples) {
    for (const auto& c : s.candidates) EXPECT_NE(c.text, "bad");
  }
}

TEST(Corpus, ChatRecordShapes) {
  auto m = parse_chat_record(json::parse(
      R"({"messages":[{"role":"system","content":"s"},{"role":"user","content":"q"},{"role":"assistant","content":"a"}]})"));
  ASSERT_TRUE(m);
  EXPECT_EQ(m->first, "q");
  EXPECT_EQ(m->second, "a");
  auto sg = parse_chat_record(json::parse(R"({"conversations":[{"from":"human","value":"hq"},{"from":"gpt","value":"ha"}]})"));
  ASSERT_TRUE(sg);
  EXPECT_EQ(sg->second, "ha");
  auto alpaca = parse_chat_record(json::parse(R"({"instruction":"do","input":"this","output":"done"})"));
  ASSERT_TRUE(alpaca);
  EXPECT_EQ(alpaca->first, "do\nthis");
  EXPECT_FALSE(parse_chat_record(json::parse(R"({"text":"x"})")));
  EXPECT_FALSE(parse_chat_record(json::parse(R"([1,2])")));
}

TEST(Corpus, UnreadablePathAndUnknownAdapter) {
  try {
    ingest(manifest("x", AdapterKind::generic_chat, "/nonexistent/file.jsonl"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unreadable_path);
  }
  EXPECT_THROW(parse_adapter("csv"), Error);
  EXPECT_EQ(parse_adapter("cvalues-comparison"), AdapterKind::cvalues_comparison);
}

// Brute-force oracle: pairwise comparison of normalized prompts, first wins.
std::vector<std::string> brute_force_dedup(const std::vector<std::string>& prompts) {
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    bool dup = false;
    for (std::size_t j = 0; j < i && !dup; ++j) dup = text::normalize(prompts[i]) == text::normalize(prompts[j]);
    if (!dup) kept.push_back(prompts[i]);
  }
  return kept;
}

TEST(Corpus, DedupMatchesBruteForceOn1000With100Duplicates) {
  std::mt19937_64 rng(2024);
  std::vector<std::string> prompts;
  for (int i = 0; i < 900; ++i) prompts.push_back("prompt number " + std::to_string(i) + " 请回答");
  // 100 duplicates with whitespace variants, inserted at random positions
  for (int k = 0; k < 100; ++k) {
    std::string base = prompts[rng() % 900];
    std::string variant = (k % 3 == 0) ? "  " + base : (k % 3 == 1) ? base + "\t" : base;
    const auto pos = base.find(' ');
    if (k % 3 == 2) variant.replace(pos, 1, "　 ");  // ideographic space run
    prompts.insert(prompts.begin() + static_cast<long>(rng() % (prompts.size() + 1)), variant);
  }
  ASSERT_EQ(prompts.size(), 1000u);
  std::vector<AlignmentSample> samples;
  for (const auto& p : prompts) samples.push_back(AlignmentSample::make(p, "gen"));
  auto out = dedup(samples);
  auto oracle = brute_force_dedup(prompts);
  ASSERT_EQ(out.size(), oracle.size());
  EXPECT_EQ(out.size(), 900u);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i].prompt, text::trim(oracle[i]));
}

TEST(Corpus, CrossCorpusDuplicatesChargedToLaterManifest) {
  TempDir dir;
  auto a = dir.write("a.jsonl", lines({{{"prompt", "shared"}}, {{"prompt", "only a"}}}));
  auto b = dir.write("b.jsonl", lines({{{"instruction", "shared"}, {"output", "x"}}, {{"instruction", "only b"}}}));
  auto results = ingest_all({manifest("a", AdapterKind::safety_prompts, a), manifest("b", AdapterKind::generic_chat, b)});
  ASSERT_EQ(results.size(), 2u);
  EXPECT_EQ(results[0].manifest.counts.kept, 2u);
  EXPECT_EQ(results[1].manifest.counts.kept, 1u);
  EXPECT_EQ(results[1].manifest.counts.deduped, 1u);
  EXPECT_TRUE(results[1].manifest.counts.balanced());
  EXPECT_EQ(results[1].samples[0].prompt, "only b");
}

}  // namespace
}  // namespace safealign
