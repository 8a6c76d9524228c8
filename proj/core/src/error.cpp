#include "cdp/error.hpp"

namespace cdp {

const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid argument";
    case Errc::io: return "i/o error";
    case Errc::bad_magic: return "bad magic";
    case Errc::unsupported_version: return "unsupported version";
    case Errc::dimension_mismatch: return "dimension mismatch";
    case Errc::truncated: return "truncated payload";
    case Errc::malformed: return "malformed input";
    case Errc::duplicate_id: return "duplicate id";
    case Errc::unknown_id: return "unknown id";
    case Errc::zero_norm: return "zero-norm vector";
    case Errc::invariant: return "invariant violation";
  }
  return "unknown error";
}

}  // namespace cdp
