#include "safealign/regen.hpp"

#include <algorithm>

#include "safealign/error.hpp"
#include "safealign/log.hpp"
#include "safealign/text.hpp"

namespace safealign {

RegenOutcome split_regenerated(std::string_view completion) {
  RegenOutcome out;
  out.response.origin = Origin::regenerated;
  const auto pos = completion.rfind(kFinalDelimiter);
  if (pos == std::string_view::npos) {
    out.response.text = text::trim(completion);
    out.missing_delimiter = true;
  } else {
    out.rationale = text::trim(completion.substr(0, pos));
    out.response.text = text::trim(completion.substr(pos + kFinalDelimiter.size()));
  }
  if (out.response.text.empty()) throw Error(Errc::regeneration_failed, "completion has no response text");
  return out;
}

void validate_regen_template(const PromptTemplate& tmpl) {
  if (tmpl.count("{instruction}") != 1) {
    throw Error(Errc::invalid_argument, "regen template must contain {instruction} exactly once");
  }
  if (tmpl.count(kFinalDelimiter) != 1) {
    throw Error(Errc::invalid_argument, "regen template must contain " + std::string(kFinalDelimiter) + " exactly once");
  }
}

Regenerator::Regenerator(Gateway& gateway, std::string backend_id, PromptTemplate tmpl, double temperature, double top_p)
    : gateway_(gateway), backend_id_(std::move(backend_id)), tmpl_(std::move(tmpl)), temperature_(temperature), top_p_(top_p) {
  validate_regen_template(tmpl_);
}

ChatRequest Regenerator::build_request(const AlignmentSample& sample) const {
  ChatRequest req;
  req.backend_id = backend_id_;
  req.messages = {{Role::user, tmpl_.render({{"instruction", sample.prompt}})}};
  req.temperature = temperature_;
  req.top_p = top_p_;
  req.max_tokens = 1024;
  return req;
}

RegenOutcome Regenerator::regenerate(AlignmentSample& sample) const {
  if (sample.status != SampleStatus::tagged && sample.status != SampleStatus::augmented_origin) {
    throw Error(Errc::invalid_argument, "regenerate requires a tagged sample, got " + std::string(to_string(sample.status)));
  }
  Completion c = gateway_.complete(build_request(sample));
  RegenOutcome out = split_regenerated(c.text);
  if (out.missing_delimiter) log::warn("regen_missing_delimiter", {{"sample", sample.id}});
  auto& cands = sample.candidates;
  cands.erase(std::remove_if(cands.begin(), cands.end(), [](const auto& cr) { return cr.origin == Origin::regenerated; }),
              cands.end());
  cands.push_back(out.response);
  sample.regen_rationale = out.rationale.empty() ? std::nullopt : std::optional<std::string>(out.rationale);
  sample.regen_warning = out.missing_delimiter;
  return out;
}

}  // namespace safealign
