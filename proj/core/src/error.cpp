#include "hgff/error.hpp"

namespace hgff {

const char* errc_name(errc code) noexcept {
  switch (code) {
    case errc::invalid_parameter: return "invalid-parameter";
    case errc::empty_domain: return "empty-domain";
    case errc::grid_mismatch: return "grid-mismatch";
    case errc::outside_domain: return "outside-domain";
    case errc::on_skeleton: return "on-skeleton";
    case errc::resolution_too_coarse: return "resolution-too-coarse";
    case errc::t_not_on_grid: return "t-not-on-grid";
    case errc::t_order: return "t-order";
    case errc::solver_failure: return "solver-failure";
    case errc::convergence_failure: return "convergence-failure";
    case errc::incomplete_spectrum: return "incomplete-spectrum";
    case errc::mask_mismatch: return "mask-mismatch";
    case errc::support_not_on_skeleton: return "support-not-on-skeleton";
    case errc::indefinite_increment: return "indefinite-increment";
    case errc::config_parse_error: return "config-parse-error";
    case errc::resource_limit: return "resource-limit";
    case errc::degenerate_probe: return "degenerate-probe";
    case errc::empty_accumulator: return "empty-accumulator";
  }
  return "unknown-error";
}

}  // namespace hgff
