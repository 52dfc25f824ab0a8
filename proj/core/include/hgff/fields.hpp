#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "hgff/hadamard.hpp"
#include "hgff/harmonic.hpp"
#include "hgff/rng.hpp"
#include "hgff/workspace.hpp"

namespace hgff {

enum class FieldKind { white_noise, gff, boundary_noise };

// One random field draw.  Interior-valued kinds store one value per interior
// cell of their mask (white noise: the final flow mask; gff: the final mask
// with support inside V_t).  Boundary noise stores one value per boundary
// cell of V_t.  The same RngSpec always reproduces the same values.
struct FieldSample {
  FieldKind kind = FieldKind::white_noise;
  Eigen::VectorXd values;
  int time_index = -1;
  RngSpec rng;
};

// White noise with E phi(z)^2 = 1/h^2, so <f, phi> = h^2 sum f phi has
// variance h^2 sum f^2.  Standard normals are keyed by cell id, so nested
// masks see restrictions of one underlying field.
FieldSample sample_white_noise(const DomainMask& mask, RngSpec rng);

// Standard-normal noise coordinate of each operator column under one white
// draw on the final mask: the normalized cell sum of the column's noise
// cells.  Coordinates of distinct columns are independent because the cell
// sets are disjoint.
Eigen::VectorXd noise_coordinates(const HadamardOperator& op, const FieldSample& white);
// Same coordinates straight from the keyed stream, bit-identical to sampling
// white noise with the same RngSpec first (skips building the field).
Eigen::VectorXd noise_coordinates(const HadamardOperator& op, RngSpec rng);

// Throws support-not-on-skeleton unless every mass sits on a skeleton or
// anchor cell of the flow.
void validate_skeleton_support(const DomainFlow& flow, std::span<const PointMass> f);

// Field with covariance gram(t, t): sum over columns up to t of
// sqrt(weight) * noise coordinate * column.
FieldSample gff_via_hadamard(const HadamardOperator& op, const FieldSample& white, double t);

// Oracle sampler from a full eigendecomposition: sum_i xi_i lambda_i^{-1/2}
// phi_i has covariance exactly the Green matrix.  Throws incomplete-spectrum
// on a truncated decomposition.
FieldSample gff_via_spectral(const SpectralDecomp& decomp, RngSpec rng);

// The field at every grid time from one white draw; column k holds the field
// at t_k (column 0 is zero).  Increments across disjoint time windows use
// disjoint noise coordinates.
struct Trajectory {
  Eigen::MatrixXd fields;
  RngSpec rng;
};

Trajectory trajectory(const HadamardOperator& op, const FieldSample& white);

// h^2-weighted interior pairing <f, v>.
double pair_field(const DomainMask& mask, const Eigen::VectorXd& f, const Eigen::VectorXd& v);

// Cumulative pairings X_k = <f, field at t_k> for one white draw, k = 0..M,
// computed in column coordinates (no field assembly).
Eigen::VectorXd pairing_curve(const HadamardOperator& op, const Eigen::VectorXd& f,
                              const FieldSample& white);
// Curve from precomputed adjoint coefficients and noise coordinates (the
// ensemble-loop form: the adjoint is shared across draws).
Eigen::VectorXd pairing_curve(const HadamardOperator& op, const Eigen::VectorXd& adjoint_coefs,
                              const Eigen::VectorXd& nu);

// Per-shell covariance rate of the pairing increments, read off the operator
// weights: rate[k] = sum over block-k columns of (Q*f)(Q*g) w / delta_tau_k.
// Deterministic; equals Cov(<f, increment>, <g, increment>) / delta_tau in
// exact mode.  Entry 0 is 0.
std::vector<double> increment_rate_curve(const HadamardOperator& op, const Eigen::VectorXd& f,
                                         const Eigen::VectorXd& g);

// Weighted white noise on the boundary ring of V_t with
// Var <phi, Xi> = sum phi^2 rho ds under the flow arclength weights.
struct BoundaryNoiseSample {
  Eigen::VectorXd values;
  int time_index = -1;
  RngSpec rng;
};

BoundaryNoiseSample sample_boundary_noise(const FlowWorkspace& ws, double t, RngSpec rng);

// Harmonic extension of a boundary-noise draw to the interior of V_t.
Eigen::VectorXd extend_boundary_noise(const FlowWorkspace& ws, const BoundaryNoiseSample& noise);

// Boundary average of the final field against a point-mass combination f on
// the skeleton, computed two ways that agree in the continuum:
//   boundary_route: the trace of the final field on the boundary ring of V_t
//     paired with the sweep of f, against the flow arclength;
//   noise_route: the column-coordinate pairing of (Q_1 - Q_t)* f with the
//     white draw.
struct BoundaryAverage {
  double boundary_route = 0.0;
  double noise_route = 0.0;
};

BoundaryAverage boundary_average(const HadamardOperator& op, const FieldSample& white, double t,
                                 std::span<const PointMass> f);

// Deterministic covariance quadrature of boundary averages:
//   sum over shells after t v t' of sum_a (sweep_k f)(sweep_k g) rho ds
//   delta_tau_k.
double boundary_average_cov(const FlowWorkspace& ws, std::span<const PointMass> f,
                            std::span<const PointMass> g, double t, double t2);

// Monte Carlo check of the Brownian time change of <f, field at t>: per grid
// time the empirical variance against the quadrature of the variance rate,
// plus independence z-scores for the increments over a partition of [0, 1]
// into four windows.
struct TimeChangeReport {
  std::vector<double> times;
  std::vector<double> empirical_var;
  std::vector<double> quadrature;  // cumulative sum of kappa(t_j) delta_tau_j
  std::vector<double> ratio;       // empirical / quadrature, 0 where quadrature is 0
  std::vector<double> increment_z;
  std::int64_t sample_count = 0;
};

TimeChangeReport time_change_check(const HadamardOperator& op, const Eigen::VectorXd& f,
                                   int samples, RngSpec base, int threads = 1);

}  // namespace hgff
