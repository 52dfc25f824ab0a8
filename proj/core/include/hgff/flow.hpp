#pragma once

#include <functional>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "hgff/grid.hpp"

namespace hgff {

// Growing family of concentric disks Omega(t) = { |z - center| < t * max_radius }.
struct DiskFlow {
  Point center;
  double max_radius = 1.0;
};

// Star-shaped family with radial function R(t, theta) = t * base_radius *
// (1 + eps * cos(modes * theta)).
struct StarFlow {
  Point center;
  double base_radius = 1.0;
  double eps = 0.0;
  int modes = 0;
};

// Annulus collapsing onto the circle of radius `skeleton_radius`: inner
// radius a(t) = c - t*(c - inner_final), outer radius b(t) = c + t*(outer_final - c).
struct AnnulusFlow {
  Point center;
  double inner_final = 0.25;
  double outer_final = 1.0;
  double skeleton_radius = 0.6;
};

using FlowSpec = std::variant<DiskFlow, StarFlow, AnnulusFlow>;

void validate_spec(const FlowSpec& spec);
Point flow_center(const FlowSpec& spec);
// Euclidean distance from p to the degenerate start of the flow (a point or
// a circle).
double skeleton_distance(const FlowSpec& spec, Point p);

// The unique t in (0, 1] with p on the boundary of Omega(t).  Throws
// outside-domain when p is not swept by the flow, on-skeleton at the
// degenerate start.
double tau_of_point(const FlowSpec& spec, Point p);

// Boundary speed |det DF| / |dF/dtheta| of the sweep parametrization at p
// (both branches for the annulus).  Same domain restrictions as tau_of_point.
double rho_at(const FlowSpec& spec, Point p);

namespace detail {
// rho by formula without the domain membership check (used for boundary
// cells of lattice masks, which sit just outside the swept region).
double rho_value(const FlowSpec& spec, Point p);
}  // namespace detail

// Lattice discretization of a flow: uniform time grid t_k = k/M, cell shells
// S_k = { tau in (t_{k-1}, t_k] } and nested masks V_k.  Cells within half a
// spacing of the skeleton belong to every mask with k >= 1 but to no shell
// and carry no noise.  V_0 is the empty mask (the start has zero area).
class DomainFlow {
 public:
  DomainFlow() = default;

  const Grid& grid() const { return d_->grid; }
  const FlowSpec& spec() const { return d_->spec; }
  int shell_count() const { return d_->shell_count; }

  std::span<const double> time_grid() const { return d_->time_grid; }
  double time_point(int k) const { return d_->time_grid[static_cast<size_t>(k)]; }
  double delta_tau(int k) const { return time_point(k) - time_point(k - 1); }
  // Index of t on the time grid (|t - t_k| <= 1e-12), else t-not-on-grid.
  int time_index(double t) const;

  const DomainMask& mask(int k) const { return d_->masks[static_cast<size_t>(k)]; }
  std::span<const int> shell(int k) const { return d_->shells[static_cast<size_t>(k)]; }
  std::span<const int> skeleton_sites() const { return d_->skeleton_sites; }
  // Sites eligible to carry point masses: the skeleton sites when the lattice
  // resolves any, otherwise the inside cells nearest the skeleton.
  std::span<const int> anchor_sites() const { return d_->anchor_sites; }

  // Per-site data; NaN / -1 outside the swept region, shell index 0 on the
  // skeleton cells.
  double tau(int site) const { return d_->tau[static_cast<size_t>(site)]; }
  double rho(int site) const { return d_->rho[static_cast<size_t>(site)]; }
  int shell_index(int site) const { return d_->shell_of[static_cast<size_t>(site)]; }

  // Boundary speed at a boundary cell of mask V_k, evaluated at the nearest
  // shell-k cell (falling back to the nearest swept cell of V_k when the
  // shell is empty).
  double boundary_rho(int k, int boundary_idx) const;
  // boundary_rho for every boundary cell of V_k at once.
  std::vector<double> boundary_rho_profile(int k) const;

  // Effective arclength per boundary cell of V_k: the analytic boundary
  // curve at t_k is sampled finely in the sweep parameter and each arc
  // element is assigned to the nearest boundary cell, so the weights sum to
  // the exact curve length and vary smoothly along the staircase.  Boundary
  // quadratures against these weights are free of the lattice secant bias
  // that a flat one-cell-width weight carries.  Cells the curve never comes
  // nearest to (absent on the presets) fall back to one cell width.
  std::vector<double> boundary_arclength(int k) const;

 private:
  struct Data {
    Grid grid;
    FlowSpec spec;
    int shell_count = 0;
    std::vector<double> time_grid;
    std::vector<double> tau, rho;
    std::vector<int> shell_of;
    std::vector<std::vector<int>> shells;  // index 0 unused
    std::vector<int> skeleton_sites, anchor_sites;
    std::vector<DomainMask> masks;  // V_0..V_M
  };

  explicit DomainFlow(std::shared_ptr<const Data> d) : d_(std::move(d)) {}
  friend DomainFlow build_flow(const Grid& grid, const FlowSpec& spec, int shell_count);

  std::shared_ptr<const Data> d_;
};

DomainFlow build_flow(const Grid& grid, const FlowSpec& spec, int shell_count);

// Suggested shell count for a grid: roughly one to two lattice layers per
// shell for the unit-scale presets.
inline int default_shell_count(int n) { return n / 3; }

struct PolarIntegral {
  double area_form = 0.0;   // sum of f h^2 over cells with tau <= t
  double shell_form = 0.0;  // sum over shells of dt * sum of f rho ds
};

// Two quadratures of the same integral of f over Omega(t): the plain cell sum
// grouped by shell, and the boundary-flux form.  t must lie on the time grid.
PolarIntegral polar_integrate(const DomainFlow& flow, const std::function<double(Point)>& f, double t);

}  // namespace hgff
