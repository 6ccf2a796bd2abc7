#include "safealign/error.hpp"

namespace safealign {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::malformed_request: return "malformed-request";
    case Errc::backend_unreachable: return "backend-unreachable";
    case Errc::rate_limit_timeout: return "rate-limit-timeout";
    case Errc::malformed_backend_reply: return "malformed-backend-reply";
    case Errc::unsupported_capability: return "unsupported-capability";
    case Errc::fixture_miss: return "fixture-miss";
    case Errc::unknown_backend: return "unknown-backend";
    case Errc::unreadable_path: return "unreadable-path";
    case Errc::unknown_adapter: return "unknown-adapter";
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::undefined_ppl: return "undefined-ppl";
    case Errc::scoring_failed: return "scoring-failed";
    case Errc::regeneration_failed: return "regeneration-failed";
    case Errc::conflict: return "conflict";
    case Errc::not_found: return "not-found";
    case Errc::category_mismatch: return "category-mismatch";
    case Errc::empty_input: return "empty-input";
    case Errc::unknown_format: return "unknown-format";
    case Errc::invalid_config: return "invalid-config";
    case Errc::io_error: return "io-error";
  }
  return "unknown";
}

}  // namespace safealign
