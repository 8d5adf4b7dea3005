#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace earth {

enum class ErrorCode {
  invalid_argument,
  degenerate_input,
  backend_unavailable,
  malformed_response,
  missing_logprobs,
  empty_generation,
  capability_absent,
  not_found,
  conflict,
  storage,
  schema_mismatch,
  config,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the project. The code is what callers branch on;
// the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  // Transport-level failures are worth another attempt; everything else is not.
  bool retryable() const noexcept { return code_ == ErrorCode::backend_unavailable; }

 private:
  ErrorCode code_;
};

}  // namespace earth
