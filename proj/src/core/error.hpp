#pragma once

#include <stdexcept>
#include <string>

namespace moan {

// Mirrors moan_status in moan.h; the C layer maps exceptions onto these.
enum class ErrorCode : int {
  ok = 0,
  invalid_argument = 1,
  dimension_mismatch = 2,
  non_finite = 3,
  parse_error = 4,
  io_error = 5,
  format_mismatch = 6,
  missing_artifact = 7,
  runtime_failure = 8,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace moan
