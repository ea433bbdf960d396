#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace clickotp {

enum class ErrorCode {
  Domain,         // value outside a mathematical domain (grid label, params)
  OutOfBounds,    // click outside the rendered image box
  Validation,     // malformed caller input
  Conflict,       // duplicate resource
  NotFound,
  AlreadyUsed,    // OTP consumed
  Expired,        // OTP or session past its lifetime
  Delivery,       // transport failed
  Config,         // missing or malformed configuration
  Integrity,      // authentication tag or record check failed
  Authorization,  // requester may not access the resource
  PoolExhausted,  // not enough decoys
  Unavailable,    // generic login refusal
  Locked,         // lockout active
  Protocol,       // click referencing an image not presented
  State,          // operation not allowed in the current state
  Refused,        // request exceeds a hard budget
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Domain: return "domain";
    case ErrorCode::OutOfBounds: return "out_of_bounds";
    case ErrorCode::Validation: return "validation";
    case ErrorCode::Conflict: return "conflict";
    case ErrorCode::NotFound: return "not_found";
    case ErrorCode::AlreadyUsed: return "already_used";
    case ErrorCode::Expired: return "expired";
    case ErrorCode::Delivery: return "delivery";
    case ErrorCode::Config: return "config";
    case ErrorCode::Integrity: return "integrity";
    case ErrorCode::Authorization: return "authorization";
    case ErrorCode::PoolExhausted: return "pool_exhausted";
    case ErrorCode::Unavailable: return "unavailable";
    case ErrorCode::Locked: return "locked";
    case ErrorCode::Protocol: return "protocol";
    case ErrorCode::State: return "state";
    case ErrorCode::Refused: return "refused";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// the HTTP layer can map it to a status without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace clickotp
