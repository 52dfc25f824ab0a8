#pragma once

#include <cstring>
#include <span>
#include <string_view>

#include "hgff/error.hpp"

namespace hgff {

// The single threshold table behind every quantitative pass/fail verdict:
// the command line --check mode and the acceptance test suite both read the
// numbers from here, so the two can never drift apart.
struct CheckThreshold {
  const char* name;
  double value;
};

inline constexpr CheckThreshold kCheckTable[] = {
    // Exact-mode factorization reproduces the Green matrix to solver
    // precision (relative Frobenius).
    {"gram_defect_exact", 1e-9},
    // Interior harmonicity of field increments, relative stencil residual.
    {"lemma_residual_exact", 1e-9},
    {"lemma_residual_kernel", 1e-8},
    // Max-abs defect of the boundary-sweep identity on nested masks.
    {"identity_defect", 1e-9},
    // Monte Carlo agreement bands, in standard errors.
    {"identity_mc_se", 3.0},
    {"covariance_se", 4.0},
    {"spectral_joint_se", 5.0},
    {"mean_se", 3.0},
    {"variance_se", 4.0},
    // Relative error of the lattice Green value at the off-center probe
    // against the closed-form disk value.
    {"green_center_rel", 0.05},
    // Correlation z-score bound for independent increments, and the fraction
    // of probe pairs required inside it over repeated seeds.
    {"increment_z", 3.0},
    {"increment_pass_fraction", 0.95},
    // Circle-average variance against (1/2 pi) log(1/t).
    {"circle_var_rel", 0.10},
    // Variance-rate curve against (2 pi t)^{-1} on the disk, and the
    // time-change variance ratio over the mid band.
    {"kappa_rel", 0.10},
    {"time_change_var_rel", 0.15},
    // Per-shell increment covariance rate against the boundary-noise rate.
    {"rate_match_rel", 0.15},
    // Three-route boundary-average variance agreement: empirical against
    // either deterministic route, and the two deterministic routes against
    // each other.
    {"route_var_rel", 0.10},
    {"quad_energy_rel", 0.05},
    // Per-draw agreement of the two boundary-average routes.
    {"route_agreement_rel", 0.02},
    // Gaussianity of standardized pairings at 1e5 samples.
    {"gaussian_skewness", 0.05},
    {"gaussian_excess_kurtosis", 0.1},
};

inline double check_threshold(std::string_view name) {
  for (const CheckThreshold& row : kCheckTable)
    if (name == row.name) return row.value;
  fail(errc::invalid_parameter, "unknown check name: " + std::string(name));
}

// Time bands (fractions of the flow) over which the Monte Carlo laws are
// required to hold; outside them staircase and quadrature error dominate.
inline constexpr double kKappaBandLo = 0.3;
inline constexpr double kKappaBandHi = 0.9;
inline constexpr double kVarBandLo = 0.4;
inline constexpr double kVarBandHi = 0.9;
// Mid-range shells for the per-shell rate comparison, as fractions of M.
inline constexpr double kRateBandLo = 1.0 / 3.0;
inline constexpr double kRateBandHi = 0.75;

}  // namespace hgff
