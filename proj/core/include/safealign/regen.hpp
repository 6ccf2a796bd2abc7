#pragma once

#include <string>
#include <string_view>

#include "safealign/gateway.hpp"
#include "safealign/sample.hpp"
#include "safealign/templates.hpp"

namespace safealign {

inline constexpr std::string_view kFinalDelimiter = "###FINAL###";

struct RegenOutcome {
  CandidateResponse response;
  std::string rationale;
  bool missing_delimiter = false;
};

/// Text after the last delimiter becomes the response, text before it the
/// rationale. Without a delimiter the whole completion is the response and
/// missing_delimiter is set. Throws Errc::regeneration_failed when nothing
/// usable remains.
RegenOutcome split_regenerated(std::string_view completion);

/// Throws Errc::invalid_argument unless {instruction} and the delimiter each
/// occur exactly once.
void validate_regen_template(const PromptTemplate& tmpl);

class Regenerator {
 public:
  Regenerator(Gateway& gateway, std::string backend_id, PromptTemplate tmpl = PromptTemplate::builtin("regen"),
              double temperature = 0.3, double top_p = 0.9);

  ChatRequest build_request(const AlignmentSample& sample) const;

  /// Appends (or replaces) the regenerated candidate and stores the rationale.
  /// On failure the sample is left unchanged.
  RegenOutcome regenerate(AlignmentSample& sample) const;

  const PromptTemplate& prompt_template() const { return tmpl_; }

 private:
  Gateway& gateway_;
  std::string backend_id_;
  PromptTemplate tmpl_;
  double temperature_;
  double top_p_;
};

}  // namespace safealign
