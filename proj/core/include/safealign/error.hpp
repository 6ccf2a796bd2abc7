#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace safealign {

enum class Errc {
  malformed_request,
  backend_unreachable,
  rate_limit_timeout,
  malformed_backend_reply,
  unsupported_capability,
  fixture_miss,
  unknown_backend,
  unreadable_path,
  unknown_adapter,
  invalid_argument,
  undefined_ppl,
  scoring_failed,
  regeneration_failed,
  conflict,
  not_found,
  category_mismatch,
  empty_input,
  unknown_format,
  invalid_config,
  io_error,
};

std::string_view to_string(Errc code) noexcept;

/// Every failure the library reports carries one of the codes above; callers
/// switch on code() rather than parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace safealign
