#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "safealign/gateway.hpp"
#include "safealign/sample.hpp"
#include "safealign/templates.hpp"

namespace safealign {

/// exp(-mean(logprobs)). Throws Errc::undefined_ppl on an empty sequence.
double perplexity(std::span<const double> logprobs);
double perplexity(const std::vector<TokenLogprob>& tokens);

class PerplexityScorer {
 public:
  virtual ~PerplexityScorer() = default;
  virtual double score(std::string_view prompt) const = 0;
  virtual std::string name() const = 0;
};

/// Perplexity from a logprob-capable gateway backend.
class BackendPerplexity final : public PerplexityScorer {
 public:
  BackendPerplexity(Gateway& gateway, std::string backend_id);
  double score(std::string_view prompt) const override;
  std::string name() const override { return "backend:" + backend_id_; }

 private:
  Gateway& gateway_;
  std::string backend_id_;
};

/// Character n-gram language model with add-one smoothing, for offline
/// scoring. Vocabulary is the set of code points seen in training plus one
/// unknown symbol.
class CharNgramModel final : public PerplexityScorer {
 public:
  explicit CharNgramModel(std::size_t order = 3);

  void fit(const std::vector<std::string>& corpus);
  std::vector<double> logprobs(std::string_view text) const;
  double score(std::string_view prompt) const override;
  std::string name() const override { return "char-ngram-" + std::to_string(order_); }
  std::size_t vocab_size() const { return vocab_.size() + 1; }

 private:
  std::size_t order_;
  std::unordered_map<std::u32string, std::unordered_map<char32_t, std::size_t>> counts_;
  std::unordered_map<std::u32string, std::size_t> context_totals_;
  std::unordered_map<char32_t, bool> vocab_;
};

/// Tolerant number extraction: the first bracketed list if there is one,
/// otherwise the first standalone decimals. Returns nullopt unless exactly
/// `expected` numbers are found and all lie in [0, 1]. Never clamps.
std::optional<std::vector<double>> parse_scores(std::string_view text, std::size_t expected);

struct PairScores {
  double first = 0.0;
  double second = 0.0;
  bool degenerate = false;
  int calls = 0;
};

/// LLM safety judge for responses and instructions. Each scorer makes at
/// most two calls: the original request and one reprompt after a parse
/// failure.
class SafetyJudge {
 public:
  SafetyJudge(Gateway& gateway, std::string backend_id,
              PromptTemplate pair_tmpl = PromptTemplate::builtin("judge_pair"),
              PromptTemplate instruction_tmpl = PromptTemplate::builtin("judge_instruction"));

  ChatRequest pair_request(const AlignmentSample& sample) const;
  ChatRequest instruction_request(const AlignmentSample& sample) const;

  /// Scores candidates[0] as output1 and candidates[1] as output2 and writes
  /// safety_score on each. A lone candidate is duplicated into both slots and
  /// gets the mean of the two scores. Throws Errc::scoring_failed.
  PairScores score_response_pair(AlignmentSample& sample) const;

  /// Low = risky instruction. Throws Errc::scoring_failed.
  double score_instruction(const AlignmentSample& sample) const;

  const std::string& backend_id() const { return backend_id_; }
  const PromptTemplate& pair_template() const { return pair_tmpl_; }
  const PromptTemplate& instruction_template() const { return instruction_tmpl_; }

 private:
  std::vector<double> ask(ChatRequest req, std::size_t expected, std::string_view reminder, int* calls) const;

  Gateway& gateway_;
  std::string backend_id_;
  PromptTemplate pair_tmpl_;
  PromptTemplate instruction_tmpl_;
};

struct ScorerOutcomes {
  std::optional<double> prompt_ppl;
  std::optional<std::vector<double>> response_safety;
  std::optional<double> instruction_safety;
  FeatureProvenance provenance;
};

/// Joins scorer outcomes into the sample's feature vector; failed scorers
/// stay null. Advances the sample to scored.
SafetyFeatureVector assemble_features(AlignmentSample& sample, ScorerOutcomes outcomes);

/// Runs the three scorers for one sample, recording failures in provenance
/// instead of throwing, then assembles features.
class RewardScorer {
 public:
  RewardScorer(const PerplexityScorer& ppl, const SafetyJudge& judge) : ppl_(ppl), judge_(judge) {}
  SafetyFeatureVector score(AlignmentSample& sample) const;

 private:
  const PerplexityScorer& ppl_;
  const SafetyJudge& judge_;
};

}  // namespace safealign
