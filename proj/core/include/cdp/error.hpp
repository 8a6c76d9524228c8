#pragma once

#include <stdexcept>
#include <string>

namespace cdp {

enum class Errc {
  invalid_argument,
  io,
  bad_magic,
  unsupported_version,
  dimension_mismatch,
  truncated,
  malformed,
  duplicate_id,
  unknown_id,
  zero_norm,
  invariant,
};

const char* to_string(Errc code) noexcept;

// Every failure raised by the library carries one of the codes above so that
// callers (the CLI in particular) can map them to exit statuses.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace cdp
