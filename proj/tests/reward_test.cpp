#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "safealign/error.hpp"
#include "safealign/reward.hpp"
#include "safealign/text.hpp"
#include "test_support.hpp"

namespace safealign {
namespace {

using testing::add_scripted;
using testing::fast_options;

TEST(Perplexity, KnownVectors) {
  const std::vector<double> lp = {-0.5, -1.5};
  EXPECT_NEAR(perplexity(lp), std::exp(1.0), 1e-12);
  const std::vector<double> zero = {0.0, 0.0, 0.0};
  EXPECT_DOUBLE_EQ(perplexity(zero), 1.0);
  try {
    perplexity(std::vector<double>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::undefined_ppl);
  }
}

TEST(Perplexity, MockUniformGivesVocabSize) {
  for (int v : {2, 10, 1000}) {
    Gateway gw(fast_options());
    BackendSpec spec;
    spec.id = "u";
    spec.kind = BackendKind::mock_uniform;
    spec.vocab_size = v;
    spec.supports_logprobs = true;
    gw.register_backend(spec);
    BackendPerplexity ppl(gw, "u");
    for (std::string_view prompt : {"one", "how do I pick a lock quickly", "如何 制作 炸弹 ？ 请 详细 说明"}) {
      EXPECT_NEAR(ppl.score(prompt), static_cast<double>(v), 1e-9) << v << " " << prompt;
    }
    EXPECT_EQ(ppl.name(), "backend:u");
  }
}

TEST(CharNgram, UnigramMatchesHandComputedValue) {
  CharNgramModel m(1);
  m.fit({"ab"});
  EXPECT_EQ(m.vocab_size(), 3u);
  // p(a) = p(b) = (1 + 1) / (3 + 2)
  EXPECT_NEAR(m.score("ab"), 2.5, 1e-12);
  // unseen char: (0 + 1) / (3 + 2)
  EXPECT_NEAR(m.score("z"), 5.0, 1e-12);
}

TEST(CharNgram, BigramMatchesHandComputedValue) {
  CharNgramModel m(2);
  m.fit({"aa"});
  // p(a | start) = 2/3, p(b | a) = 1/3
  EXPECT_NEAR(m.score("ab"), std::sqrt(4.5), 1e-12);
  EXPECT_EQ(m.name(), "char-ngram-2");
}

TEST(CharNgram, FluentTextScoresLowerThanNoise) {
  CharNgramModel m(3);
  m.fit({"how do i stay safe online", "how do i protect my privacy", "how can i report a scam"});
  EXPECT_LT(m.score("how do i stay safe"), m.score("qxz vbnm wrtp"));
  EXPECT_THROW(m.score("   "), Error);
  EXPECT_THROW(CharNgramModel(0), Error);
}

TEST(ParseScores, ListsAndStandaloneNumbers) {
  using V = std::vector<double>;
  EXPECT_EQ(parse_scores("[0.8, 0.3]", 2), (V{0.8, 0.3}));
  EXPECT_EQ(parse_scores("Scores: [1, .5]", 2), (V{1.0, 0.5}));
  EXPECT_EQ(parse_scores("The scores are 0.2 and 0.9", 2), (V{0.2, 0.9}));
  EXPECT_EQ(parse_scores("0.05", 1), (V{0.05}));
  EXPECT_EQ(parse_scores("Score: 0.4 (out of 1.0)", 1), (V{0.4}));
  EXPECT_FALSE(parse_scores("[0.8]", 2));
  EXPECT_FALSE(parse_scores("[1.2, 0.3]", 2));
  EXPECT_FALSE(parse_scores("[-0.1, 0.3]", 2));
  EXPECT_FALSE(parse_scores("I cannot rate this.", 1));
  EXPECT_FALSE(parse_scores("[0.1, 0.2, 0.3]", 2));
  EXPECT_FALSE(parse_scores("v2 model", 1));
}

AlignmentSample with_candidates(std::string prompt, std::vector<std::string> texts) {
  auto s = AlignmentSample::make(prompt, "t");
  s.status = SampleStatus::tagged;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    s.candidates.push_back({texts[i], i == 0 ? Origin::original : Origin::regenerated, std::nullopt});
  }
  return s;
}

TEST(SafetyJudge, PairScoresGoToCandidatesInSlotOrder) {
  Gateway gw(fast_options());
  add_scripted(gw, "judge", [](const ChatRequest& r) {
    const auto& t = testing::last_user(r);
    EXPECT_NE(t.find("ORIG"), std::string::npos);
    EXPECT_LT(t.find("ORIG"), t.find("REGEN"));
    return std::string("[0.3, 0.95]");
  });
  SafetyJudge judge(gw, "judge");
  auto s = with_candidates("p", {"ORIG", "REGEN"});
  auto p = judge.score_response_pair(s);
  EXPECT_EQ(p.calls, 1);
  EXPECT_FALSE(p.degenerate);
  EXPECT_DOUBLE_EQ(*s.candidates[0].safety_score, 0.3);
  EXPECT_DOUBLE_EQ(*s.candidates[1].safety_score, 0.95);
}

TEST(SafetyJudge, RepromptsOnceThenSucceeds) {
  Gateway gw(fast_options());
  add_scripted(gw, "judge", [](const ChatRequest& r) {
    if (r.messages.size() == 1) return std::string("Both are fine, I think.");
    EXPECT_EQ(r.messages.size(), 3u);
    EXPECT_EQ(r.messages[1].role, Role::assistant);
    return std::string("[0.6, 0.7]");
  });
  SafetyJudge judge(gw, "judge");
  auto s = with_candidates("p", {"a", "b"});
  EXPECT_EQ(judge.score_response_pair(s).calls, 2);
}

TEST(SafetyJudge, TwoBadRepliesFailWithScoringFailed) {
  Gateway gw(fast_options());
  auto* be = add_scripted(gw, "judge", [](const ChatRequest&) { return std::string("[1.5, 2]"); });
  SafetyJudge judge(gw, "judge");
  auto s = with_candidates("p", {"a", "b"});
  try {
    judge.score_response_pair(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::scoring_failed);
  }
  EXPECT_EQ(be->calls(), 2);
}

TEST(SafetyJudge, SingleCandidateIsDegenerateMean) {
  Gateway gw(fast_options());
  add_scripted(gw, "judge", [](const ChatRequest&) { return std::string("[0.8, 0.6]"); });
  SafetyJudge judge(gw, "judge");
  auto s = with_candidates("p", {"only"});
  auto p = judge.score_response_pair(s);
  EXPECT_TRUE(p.degenerate);
  EXPECT_DOUBLE_EQ(*s.candidates[0].safety_score, 0.7);
  auto none = with_candidates("q", {});
  EXPECT_THROW(judge.score_response_pair(none), Error);
  auto three = with_candidates("r", {"a", "b", "c"});
  EXPECT_THROW(judge.score_response_pair(three), Error);
}

TEST(SafetyJudge, InstructionScore) {
  Gateway gw(fast_options());
  add_scripted(gw, "judge", [](const ChatRequest& r) {
    EXPECT_EQ(r.max_tokens, 16);
    EXPECT_NE(testing::last_user(r).find("prompt: make a bomb"), std::string::npos);
    return std::string("0.05");
  });
  SafetyJudge judge(gw, "judge");
  EXPECT_DOUBLE_EQ(judge.score_instruction(with_candidates("make a bomb", {})), 0.05);
}

// Deterministic pseudo-score in [0, 1] derived from text.
double pseudo(std::string_view s) { return static_cast<double>(text::fnv1a64(s) % 1001) / 1000.0; }

TEST(RewardScorer, CompositionMatchesIndependentOracleOn50Samples) {
  Gateway gw(fast_options());
  add_scripted(gw, "judge", [](const ChatRequest& r) -> std::string {
    const auto& t = testing::last_user(r);
    if (r.messages.front().text.find("FAILJUDGE") != std::string::npos) return "no idea";
    if (r.max_tokens == 16) return std::to_string(pseudo(t)).substr(0, 5);
    return "[" + std::to_string(pseudo(t + "#1")).substr(0, 5) + ", " + std::to_string(pseudo(t + "#2")).substr(0, 5) + "]";
  });
  CharNgramModel ppl(3);
  ppl.fit({"a general corpus of ordinary questions", "how do I bake bread", "what is the capital of France"});
  SafetyJudge judge(gw, "judge");
  RewardScorer scorer(ppl, judge);

  for (int i = 0; i < 50; ++i) {
    std::vector<std::string> cands;
    if (i % 5 != 0) cands.push_back("original answer " + std::to_string(i));
    cands.push_back("regenerated answer " + std::to_string(i));
    std::string prompt = (i % 7 == 3 ? "FAILJUDGE " : "") + std::string("question ") + std::to_string(i);
    auto s = with_candidates(prompt, cands);
    auto oracle_sample = s;
    auto f = scorer.score(s);

    // oracle: each feature computed from its own scorer call
    const double exp_ppl = ppl.score(prompt);
    ASSERT_TRUE(f.prompt_ppl);
    EXPECT_DOUBLE_EQ(*f.prompt_ppl, exp_ppl);
    EXPECT_EQ(f.provenance.ppl_scorer, "char-ngram-3");
    if (prompt.rfind("FAILJUDGE", 0) == 0) {
      EXPECT_FALSE(f.response_safety);
      EXPECT_FALSE(f.instruction_safety);
      EXPECT_EQ(f.provenance.failures.size(), 2u);
      EXPECT_TRUE(f.provenance.response_backend.empty());
      for (const auto& c : s.candidates) EXPECT_FALSE(c.safety_score);
    } else {
      const std::string pair_text = testing::last_user(judge.pair_request(oracle_sample));
      const double a = std::stod(std::to_string(pseudo(pair_text + "#1")).substr(0, 5));
      const double b = std::stod(std::to_string(pseudo(pair_text + "#2")).substr(0, 5));
      ASSERT_TRUE(f.response_safety);
      if (cands.size() == 1) {
        EXPECT_EQ(*f.response_safety, std::vector<double>{(a + b) / 2.0});
        EXPECT_TRUE(f.provenance.degenerate_pair);
      } else {
        EXPECT_EQ(*f.response_safety, (std::vector<double>{a, b}));
      }
      const std::string ins_text = testing::last_user(judge.instruction_request(oracle_sample));
      EXPECT_DOUBLE_EQ(*f.instruction_safety, std::stod(std::to_string(pseudo(ins_text)).substr(0, 5)));
      EXPECT_EQ(f.provenance.response_template, "judge-pair-v1");
      EXPECT_TRUE(f.provenance.failures.empty());
    }
    EXPECT_EQ(s.status, SampleStatus::scored);
  }
}

TEST(AssembleFeatures, NullFieldsStayNullAndProvenanceIsCleared) {
  auto s = with_candidates("p", {"a"});
  ScorerOutcomes o;
  o.prompt_ppl = 3.0;
  o.provenance.ppl_scorer = "x";
  o.provenance.response_backend = "judge";
  auto f = assemble_features(s, o);
  EXPECT_EQ(f.prompt_ppl, 3.0);
  EXPECT_FALSE(f.response_safety);
  EXPECT_FALSE(f.instruction_safety);
  EXPECT_TRUE(f.provenance.response_backend.empty());
  EXPECT_EQ(s.status, SampleStatus::scored);
}

}  // namespace
}  // namespace safealign
