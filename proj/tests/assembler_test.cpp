#include <gtest/gtest.h>

#include <random>
#include <set>

#include "oracles.hpp"
#include "safealign/assembler.hpp"
#include "safealign/error.hpp"
#include "safealign/jsonl.hpp"
#include "safealign/text.hpp"
#include "test_support.hpp"

namespace safealign {
namespace {

using nlohmann::json;
using testing::TempDir;

AlignmentSample scored(std::string prompt, std::optional<double> ppl, std::optional<std::vector<double>> resp,
                       std::optional<double> instr) {
  auto s = AlignmentSample::make(prompt, "src");
  s.category = Category::NS;
  if (resp) {
    for (std::size_t i = 0; i < resp->size(); ++i) {
      s.candidates.push_back({"answer " + std::to_string(i) + " for " + prompt,
                              i == 0 ? Origin::original : Origin::regenerated, (*resp)[i]});
    }
  } else {
    s.candidates.push_back({"answer for " + prompt, Origin::original, std::nullopt});
  }
  SafetyFeatureVector f;
  f.prompt_ppl = ppl;
  f.response_safety = resp;
  f.instruction_safety = instr;
  s.features = f;
  s.status = SampleStatus::scored;
  return s;
}

SelectionPolicy fixed(double ppl, double resp, double instr) {
  SelectionPolicy p;
  p.tau_ppl = ppl;
  p.tau_response = resp;
  p.tau_instruction = instr;
  return p;
}

std::vector<AlignmentSample> load_fixture() {
  std::vector<AlignmentSample> out;
  for (const auto& row : jsonl::read_all(testing::fixture_path("selection_40.jsonl"))) out.push_back(row.get<AlignmentSample>());
  return out;
}

TEST(Select, DirectPredicates) {
  auto r = select({scored("a", 12, std::vector<double>{0.9, 0.95}, 0.1)}, fixed(50, 0.7, 0.3));
  EXPECT_EQ(r.selected.size(), 1u);
  EXPECT_EQ(r.selected[0].status, SampleStatus::selected);
  auto r2 = select({scored("b", 60, std::vector<double>{0.9, 0.95}, 0.1)}, fixed(50, 0.7, 0.3));
  ASSERT_EQ(r2.rejected.size(), 1u);
  EXPECT_EQ(r2.rejected[0].rejection_reason, "ppl");
  EXPECT_EQ(r2.reasons.at("ppl"), 1u);
}

TEST(Select, FirstFailedPredicateAndMissingFeatures) {
  std::vector<AlignmentSample> in = {
      scored("resp", 10, std::vector<double>{0.1, 0.2}, 0.9),  // response fails before instruction
      scored("instr", 10, std::vector<double>{0.9}, 0.9),
      scored("noppl", std::nullopt, std::vector<double>{0.9}, 0.1),
      scored("ppl-first", 99, std::nullopt, 0.1),  // ppl checked before the missing response
      scored("noinstr", 10, std::vector<double>{0.9}, std::nullopt),
  };
  auto r = select(in, fixed(50, 0.7, 0.3));
  ASSERT_EQ(r.rejected.size(), 5u);
  std::vector<std::string> reasons;
  for (const auto& s : r.rejected) reasons.push_back(*s.rejection_reason);
  EXPECT_EQ(reasons, (std::vector<std::string>{"response", "instruction", "missing-feature", "ppl", "missing-feature"}));
}

TEST(Select, RequiresScoredSamples) {
  auto s = AlignmentSample::make("x", "t");
  s.status = SampleStatus::tagged;
  EXPECT_THROW(select({s}, SelectionPolicy{}), Error);
}

TEST(Select, PercentileThreshold) {
  std::vector<AlignmentSample> in;
  for (int i = 1; i <= 10; ++i) in.push_back(scored("p" + std::to_string(i), i * 10.0, std::vector<double>{0.9}, 0.1));
  SelectionPolicy p;
  p.tau_ppl_percentile = 90;
  auto r = select(in, p);
  EXPECT_DOUBLE_EQ(r.tau_ppl, 90.0);
  EXPECT_EQ(r.selected.size(), 9u);
  EXPECT_DOUBLE_EQ(nearest_rank({3, 1, 2}, 50), 2.0);
  EXPECT_DOUBLE_EQ(nearest_rank({3, 1, 2}, 100), 3.0);
  EXPECT_THROW(nearest_rank({}, 50), Error);
}

TEST(Select, FortySampleFixtureMatchesBruteForce) {
  auto samples = load_fixture();
  ASSERT_EQ(samples.size(), 40u);
  for (double ppl : {10.0, 30.0, 50.0, 80.0}) {
    for (double resp : {0.5, 0.7, 0.9}) {
      for (double instr : {0.1, 0.3, 0.5}) {
        auto r = select(samples, fixed(ppl, resp, instr));
        std::vector<std::string> got;
        for (const auto& s : r.selected) got.push_back(s.id);
        EXPECT_EQ(got, testing::oracle_select(samples, {ppl, resp, instr}));
        EXPECT_EQ(r.selected.size() + r.rejected.size(), samples.size());
        for (const auto& s : r.rejected) EXPECT_TRUE(s.rejection_reason.has_value());
      }
    }
  }
}

TEST(Select, LooseningNeverShrinks) {
  auto samples = load_fixture();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 50; ++i) {
    auto base = fixed(5 + 80 * u(rng), u(rng), u(rng));
    auto ids = [&](const SelectionPolicy& p) {
      std::set<std::string> out;
      for (const auto& s : select(samples, p).selected) out.insert(s.id);
      return out;
    };
    const auto before = ids(base);
    auto a = base;
    a.tau_ppl = *a.tau_ppl + 10 * u(rng);
    auto b = base;
    b.tau_response = b.tau_response * u(rng);
    auto c = base;
    c.tau_instruction = c.tau_instruction + (1 - c.tau_instruction) * u(rng);
    for (const auto& looser : {a, b, c}) {
      const auto after = ids(looser);
      EXPECT_TRUE(std::includes(after.begin(), after.end(), before.begin(), before.end()));
    }
  }
}

TEST(ChooseResponse, ArgmaxTieBreakAndSingle) {
  auto s = scored("c", 1, std::vector<double>{0.2, 0.9}, 0.1);
  EXPECT_EQ(choose_response(s).origin, Origin::regenerated);
  auto tie = scored("t", 1, std::vector<double>{0.8, 0.8}, 0.1);
  EXPECT_EQ(choose_response(tie).origin, Origin::regenerated);
  EXPECT_EQ(choose_response(tie, Origin::original).origin, Origin::original);
  auto single = scored("s", 1, std::vector<double>{0.4}, 0.1);
  EXPECT_EQ(&choose_response(single), &single.candidates[0]);
  AlignmentSample empty = AlignmentSample::make("e", "t");
  EXPECT_THROW(choose_response(empty), Error);
}

TEST(PolicyJson, ParsesPercentileAndMix) {
  auto p = json::parse(R"({"tau_ppl":"p80","tau_response":0.6,"general_mix":{"count":12},"tie_break":"original"})")
               .get<SelectionPolicy>();
  EXPECT_FALSE(p.tau_ppl);
  EXPECT_DOUBLE_EQ(p.tau_ppl_percentile, 80);
  EXPECT_EQ(p.general_count, 12u);
  EXPECT_EQ(p.tie_break, Origin::original);
  EXPECT_EQ(json(p)["tau_ppl"], "p80");
  auto q = json::parse(R"({"tau_ppl":42.5,"general_mix":0})").get<SelectionPolicy>();
  EXPECT_EQ(q.tau_ppl, 42.5);
  EXPECT_DOUBLE_EQ(q.general_ratio, 0.0);
  EXPECT_THROW(json::parse(R"({"tau_ppl":"median"})").get<SelectionPolicy>(), Error);
  SelectionPolicy bad;
  bad.tau_response = 1.5;
  EXPECT_EQ(bad.problems().size(), 1u);
}

class ExportTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::string general;
    for (int i = 0; i < 30; ++i) {
      general += json{{"messages", {{{"role", "user"}, {"content", "general q" + std::to_string(i)}},
                                    {{"role", "assistant"}, {"content", "general a" + std::to_string(i)}}}}}
                     .dump() +
                 "\n";
    }
    general += "{broken\n";
    general_ = dir_.write("general.jsonl", general);
    std::vector<AlignmentSample> in;
    for (int i = 0; i < 40; ++i) {
      auto s = scored("safety q" + std::to_string(i), 10, std::vector<double>{0.5, 0.9}, 0.1);
      s.regen_rationale = "SECRET RATIONALE " + std::to_string(i);
      in.push_back(std::move(s));
    }
    selection_ = select(in, fixed(50, 0.7, 0.3));
  }

  ExportOptions options(std::uint64_t seed = 5) const {
    ExportOptions o;
    o.seed = seed;
    o.general_corpus = general_;
    o.template_versions = {{"regen", "regen-cot-v1"}};
    return o;
  }

  TempDir dir_;
  std::filesystem::path general_;
  SelectionResult selection_;
};

TEST_F(ExportTest, FourToOneMixAndManifest) {
  SelectionPolicy p = fixed(50, 0.7, 0.3);
  auto r = mix_and_export(selection_, p, options(), dir_ / "out");
  EXPECT_EQ(r.safety_count, 40u);
  EXPECT_EQ(r.general_count, 10u);
  EXPECT_EQ(r.records.size(), 50u);
  const auto& m = r.manifest;
  EXPECT_EQ(m["ratio"], "4:1");
  EXPECT_EQ(m["general_malformed"], 1);
  EXPECT_EQ(m["counts_by_category"]["NS"], 40);
  EXPECT_EQ(m["counts_by_origin"]["regenerated"], 40);
  EXPECT_EQ(m["counts_by_source"]["general"], 10);
  EXPECT_DOUBLE_EQ(m["training"]["learning_rate"].get<double>(), 6e-7);
  EXPECT_EQ(m["training"]["per_device_batch_size"], 1);
  EXPECT_EQ(m["training"]["gradient_accumulation_steps"], 50);
  EXPECT_DOUBLE_EQ(m["training"]["warmup_ratio"].get<double>(), 0.0005);
  EXPECT_EQ(m["training"]["lr_scheduler"], "cosine");
  EXPECT_EQ(m["training"]["epochs"], 3);
  EXPECT_EQ(m["template_versions"]["regen"], "regen-cot-v1");
  const std::string content = jsonl::read_file(dir_ / "out" / "dataset.jsonl");
  EXPECT_EQ(m["dataset_sha256"], text::sha256_hex(content));
  EXPECT_EQ(content.find("SECRET RATIONALE"), std::string::npos);
  EXPECT_EQ(content.find("###FINAL###"), std::string::npos);
}

TEST_F(ExportTest, SameSeedIsByteIdenticalAndSeedMatters) {
  SelectionPolicy p = fixed(50, 0.7, 0.3);
  mix_and_export(selection_, p, options(5), dir_ / "a");
  mix_and_export(selection_, p, options(5), dir_ / "b");
  mix_and_export(selection_, p, options(6), dir_ / "c");
  EXPECT_EQ(jsonl::digest_dir(dir_ / "a"), jsonl::digest_dir(dir_ / "b"));
  EXPECT_NE(jsonl::read_file(dir_ / "a" / "dataset.jsonl"), jsonl::read_file(dir_ / "c" / "dataset.jsonl"));
}

TEST_F(ExportTest, ZeroMixIsSafetyOnlyAndConversationFormat) {
  SelectionPolicy p = fixed(50, 0.7, 0.3);
  p.general_ratio = 0;
  auto o = options();
  o.general_corpus.reset();
  o.format = ExportFormat::conversation;
  auto r = mix_and_export(selection_, p, o, dir_ / "z");
  EXPECT_EQ(r.general_count, 0u);
  EXPECT_EQ(r.records.size(), 40u);
  auto rows = jsonl::read_all(dir_ / "z" / "dataset.jsonl");
  EXPECT_EQ(rows[0]["messages"][1]["role"], "assistant");
  EXPECT_EQ(r.manifest["ratio"], "1:0");
}

TEST_F(ExportTest, FloorAndFormatErrors) {
  SelectionPolicy p = fixed(50, 0.7, 0.3);
  p.min_selected = 41;
  EXPECT_THROW(mix_and_export(selection_, p, options(), dir_ / "f"), Error);
  EXPECT_THROW(parse_export_format("parquet"), Error);
  p.min_selected = 0;
  auto o = options();
  o.general_corpus = dir_ / "missing.jsonl";
  try {
    mix_and_export(selection_, p, o, dir_ / "g");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unreadable_path);
  }
}

TEST(RatioString, ReducesByGcd) {
  EXPECT_EQ(ratio_string(160, 40), "4:1");
  EXPECT_EQ(ratio_string(6, 4), "3:2");
  EXPECT_EQ(ratio_string(0, 0), "0:0");
}

}  // namespace
}  // namespace safealign
