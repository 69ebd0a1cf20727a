#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fcs {

enum class Errc {
  invalid_input,
  invalid_config,
  backend_unavailable,
  corrupt_file,
  version_mismatch,
  shape_mismatch,
  format_error,
  parse_error,
  duplicate_entry,
  degenerate_direction,
  insufficient_data,
  singular_covariance,
  diverged,
  numeric_error,
  io_error,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::invalid_input: return "invalid input";
    case Errc::invalid_config: return "invalid config";
    case Errc::backend_unavailable: return "backend unavailable";
    case Errc::corrupt_file: return "corrupt file";
    case Errc::version_mismatch: return "version mismatch";
    case Errc::shape_mismatch: return "shape mismatch";
    case Errc::format_error: return "format error";
    case Errc::parse_error: return "parse error";
    case Errc::duplicate_entry: return "duplicate entry";
    case Errc::degenerate_direction: return "degenerate direction";
    case Errc::insufficient_data: return "insufficient data";
    case Errc::singular_covariance: return "singular covariance";
    case Errc::diverged: return "diverged";
    case Errc::numeric_error: return "numeric error";
    case Errc::io_error: return "i/o error";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can branch on the kind.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace fcs
