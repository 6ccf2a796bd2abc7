#include "safealign/reward.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include "safealign/error.hpp"
#include "safealign/log.hpp"
#include "safealign/text.hpp"

namespace safealign {

double perplexity(std::span<const double> logprobs) {
  if (logprobs.empty()) throw Error(Errc::undefined_ppl, "perplexity of a zero-token sequence");
  const double sum = std::accumulate(logprobs.begin(), logprobs.end(), 0.0);
  return std::exp(-sum / static_cast<double>(logprobs.size()));
}

double perplexity(const std::vector<TokenLogprob>& tokens) {
  std::vector<double> lp;
  lp.reserve(tokens.size());
  for (const auto& t : tokens) lp.push_back(t.logprob);
  return perplexity(lp);
}

BackendPerplexity::BackendPerplexity(Gateway& gateway, std::string backend_id)
    : gateway_(gateway), backend_id_(std::move(backend_id)) {}

double BackendPerplexity::score(std::string_view prompt) const {
  return perplexity(gateway_.score_logprobs(backend_id_, prompt));
}

namespace {

constexpr char32_t kBoundary = 0x0002;

}  // namespace

CharNgramModel::CharNgramModel(std::size_t order) : order_(order) {
  if (order_ == 0) throw Error(Errc::invalid_argument, "n-gram order must be positive");
}

void CharNgramModel::fit(const std::vector<std::string>& corpus) {
  for (const auto& doc : corpus) {
    const std::u32string s = text::to_u32(text::normalize(doc));
    std::u32string ctx(order_ - 1, kBoundary);
    for (char32_t c : s) {
      vocab_[c] = true;
      ++counts_[ctx][c];
      ++context_totals_[ctx];
      if (!ctx.empty()) {
        ctx.erase(ctx.begin());
        ctx.push_back(c);
      }
    }
  }
}

std::vector<double> CharNgramModel::logprobs(std::string_view input) const {
  const std::u32string s = text::to_u32(text::normalize(input));
  const double v = static_cast<double>(vocab_size());
  std::vector<double> out;
  out.reserve(s.size());
  std::u32string ctx(order_ - 1, kBoundary);
  for (char32_t c : s) {
    double num = 1.0;
    double den = v;
    if (auto it = context_totals_.find(ctx); it != context_totals_.end()) {
      den += static_cast<double>(it->second);
      const auto& row = counts_.at(ctx);
      if (auto jt = row.find(c); jt != row.end()) num += static_cast<double>(jt->second);
    }
    out.push_back(std::log(num / den));
    if (!ctx.empty()) {
      ctx.erase(ctx.begin());
      ctx.push_back(c);
    }
  }
  return out;
}

double CharNgramModel::score(std::string_view prompt) const { return perplexity(logprobs(prompt)); }

namespace {

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Numbers that are not glued to letters, digits or a preceding dot, in order.
std::vector<double> standalone_numbers(std::string_view s) {
  std::vector<double> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    const bool starts_num = std::isdigit(static_cast<unsigned char>(c)) ||
                            ((c == '-' || c == '+' || c == '.') && i + 1 < s.size() &&
                             (std::isdigit(static_cast<unsigned char>(s[i + 1])) ||
                              (s[i + 1] == '.' && i + 2 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 2])))));
    const bool glued = i > 0 && (is_word_char(s[i - 1]) || s[i - 1] == '.');
    if (!starts_num || glued) {
      ++i;
      continue;
    }
    std::size_t j = i;
    if (s[j] == '-' || s[j] == '+') ++j;
    while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
    if (j + 1 < s.size() && s[j] == '.' && std::isdigit(static_cast<unsigned char>(s[j + 1]))) {
      ++j;
      while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
    } else if (j < s.size() && s[j] == '.' && j == i) {
      ++i;
      continue;
    }
    if (j < s.size() && std::isalpha(static_cast<unsigned char>(s[j]))) {
      // "3rd", "2x"
      i = j;
      continue;
    }
    out.push_back(std::strtod(std::string(s.substr(i, j - i)).c_str(), nullptr));
    i = j;
  }
  return out;
}

}  // namespace

std::optional<std::vector<double>> parse_scores(std::string_view text, std::size_t expected) {
  std::vector<double> values;
  const auto open = text.find('[');
  const auto close = open == std::string_view::npos ? std::string_view::npos : text.find(']', open);
  if (close != std::string_view::npos) {
    values = standalone_numbers(text.substr(open + 1, close - open - 1));
    if (values.size() != expected) return std::nullopt;
  } else {
    values = standalone_numbers(text);
    if (values.size() < expected) return std::nullopt;
    values.resize(expected);
  }
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) return std::nullopt;
  }
  return values;
}

SafetyJudge::SafetyJudge(Gateway& gateway, std::string backend_id, PromptTemplate pair_tmpl,
                         PromptTemplate instruction_tmpl)
    : gateway_(gateway),
      backend_id_(std::move(backend_id)),
      pair_tmpl_(std::move(pair_tmpl)),
      instruction_tmpl_(std::move(instruction_tmpl)) {
  pair_tmpl_.require_slots({"prompt", "output1", "output2"});
  instruction_tmpl_.require_slots({"prompt"});
}

ChatRequest SafetyJudge::pair_request(const AlignmentSample& sample) const {
  if (sample.candidates.empty() || sample.candidates.size() > 2) {
    throw Error(Errc::invalid_argument, "pairwise scoring needs one or two candidates, sample " + sample.id.substr(0, 12) +
                                            " has " + std::to_string(sample.candidates.size()));
  }
  const std::string& first = sample.candidates.front().text;
  const std::string& second = sample.candidates.back().text;
  ChatRequest req;
  req.backend_id = backend_id_;
  req.messages = {{Role::user, pair_tmpl_.render({{"prompt", sample.prompt}, {"output1", first}, {"output2", second}})}};
  req.temperature = 0.0;
  req.top_p = 1.0;
  req.max_tokens = 32;
  return req;
}

ChatRequest SafetyJudge::instruction_request(const AlignmentSample& sample) const {
  if (text::normalize(sample.prompt).empty()) throw Error(Errc::invalid_argument, "instruction scoring needs a prompt");
  ChatRequest req;
  req.backend_id = backend_id_;
  req.messages = {{Role::user, instruction_tmpl_.render({{"prompt", sample.prompt}})}};
  req.temperature = 0.0;
  req.top_p = 1.0;
  req.max_tokens = 16;
  return req;
}

std::vector<double> SafetyJudge::ask(ChatRequest req, std::size_t expected, std::string_view reminder,
                                     int* calls) const {
  Completion first = gateway_.complete(req);
  ++*calls;
  if (auto v = parse_scores(first.text, expected)) return *v;
  req.messages.push_back({Role::assistant, first.text});
  req.messages.push_back({Role::user, std::string(reminder)});
  Completion second = gateway_.complete(req);
  ++*calls;
  if (auto v = parse_scores(second.text, expected)) return *v;
  throw Error(Errc::scoring_failed, "judge output could not be parsed after one retry: " +
                                        text::to_utf8(text::to_u32(second.text).substr(0, 80)));
}

PairScores SafetyJudge::score_response_pair(AlignmentSample& sample) const {
  PairScores out;
  auto v = ask(pair_request(sample), 2,
               "Your reply could not be parsed. Output only two numerical values between 0 and 1.0, in list format, "
               "for example [0.8, 0.3].",
               &out.calls);
  out.first = v[0];
  out.second = v[1];
  if (sample.candidates.size() == 1) {
    out.degenerate = true;
    sample.candidates[0].safety_score = (v[0] + v[1]) / 2.0;
  } else {
    sample.candidates[0].safety_score = v[0];
    sample.candidates[1].safety_score = v[1];
  }
  return out;
}

double SafetyJudge::score_instruction(const AlignmentSample& sample) const {
  int calls = 0;
  return ask(instruction_request(sample), 1,
             "Your reply could not be parsed. Output only one numerical value between 0 and 1.0.", &calls)[0];
}

SafetyFeatureVector assemble_features(AlignmentSample& sample, ScorerOutcomes outcomes) {
  SafetyFeatureVector f;
  f.prompt_ppl = outcomes.prompt_ppl;
  f.response_safety = std::move(outcomes.response_safety);
  f.instruction_safety = outcomes.instruction_safety;
  f.provenance = std::move(outcomes.provenance);
  if (!f.prompt_ppl) f.provenance.ppl_scorer.clear();
  if (!f.response_safety) {
    f.provenance.response_backend.clear();
    f.provenance.response_template.clear();
  }
  if (!f.instruction_safety) {
    f.provenance.instruction_backend.clear();
    f.provenance.instruction_template.clear();
  }
  sample.features = f;
  sample.advance(SampleStatus::scored);
  return f;
}

SafetyFeatureVector RewardScorer::score(AlignmentSample& sample) const {
  ScorerOutcomes o;
  auto fail = [&](std::string_view scorer, const Error& e) {
    o.provenance.failures.push_back(std::string(scorer) + ": " + std::string(to_string(e.code())));
    log::warn("scorer_failed", {{"sample", sample.id}, {"scorer", scorer}, {"error", e.what()}});
  };
  try {
    o.prompt_ppl = ppl_.score(sample.prompt);
    o.provenance.ppl_scorer = ppl_.name();
  } catch (const Error& e) {
    fail("prompt_ppl", e);
  }
  try {
    for (auto& c : sample.candidates) c.safety_score.reset();
    PairScores p = judge_.score_response_pair(sample);
    std::vector<double> scores;
    for (const auto& c : sample.candidates) scores.push_back(*c.safety_score);
    o.response_safety = std::move(scores);
    o.provenance.response_backend = judge_.backend_id();
    o.provenance.response_template = judge_.pair_template().version;
    o.provenance.degenerate_pair = p.degenerate;
  } catch (const Error& e) {
    for (auto& c : sample.candidates) c.safety_score.reset();
    fail("response_safety", e);
  }
  try {
    o.instruction_safety = judge_.score_instruction(sample);
    o.provenance.instruction_backend = judge_.backend_id();
    o.provenance.instruction_template = judge_.instruction_template().version;
  } catch (const Error& e) {
    fail("instruction_safety", e);
  }
  return assemble_features(sample, std::move(o));
}

}  // namespace safealign
