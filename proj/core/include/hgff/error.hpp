#pragma once

#include <stdexcept>
#include <string>

namespace hgff {

// Failure categories surfaced by the library.  Each maps to a stable name
// used in messages and in the command line tool's error reporting.
enum class errc {
  invalid_parameter,
  empty_domain,
  grid_mismatch,
  outside_domain,
  on_skeleton,
  resolution_too_coarse,
  t_not_on_grid,
  t_order,
  solver_failure,
  convergence_failure,
  incomplete_spectrum,
  mask_mismatch,
  support_not_on_skeleton,
  indefinite_increment,
  config_parse_error,
  resource_limit,
  degenerate_probe,
  empty_accumulator,
};

const char* errc_name(errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& message) { throw Error(code, message); }

inline void require(bool ok, errc code, const std::string& message) {
  if (!ok) fail(code, message);
}

}  // namespace hgff
