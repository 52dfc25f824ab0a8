#include "hgff/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hgff {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
// Slack for assigning a cell whose tau lands within rounding of a grid time
// to the earlier shell; deterministic and far below any lattice scale.
constexpr double kTieRel = 1e-9;

struct Polar {
  double r;
  double theta;
};

Polar to_polar(Point center, Point p) {
  const double dx = p.x - center.x, dy = p.y - center.y;
  return {std::hypot(dx, dy), std::atan2(dy, dx)};
}

// tau without domain checks; NaN when the point is not swept by t <= 1,
// negative-zero cases cannot occur (radii positive).
double tau_raw(const FlowSpec& spec, Point p) {
  if (const auto* d = std::get_if<DiskFlow>(&spec)) {
    const auto pol = to_polar(d->center, p);
    return pol.r / d->max_radius;
  }
  if (const auto* s = std::get_if<StarFlow>(&spec)) {
    const auto pol = to_polar(s->center, p);
    const double g = 1.0 + s->eps * std::cos(s->modes * pol.theta);
    return pol.r / (s->base_radius * g);
  }
  const auto& a = std::get<AnnulusFlow>(spec);
  const auto pol = to_polar(a.center, p);
  const double c = a.skeleton_radius;
  return pol.r < c ? (c - pol.r) / (c - a.inner_final) : (pol.r - c) / (a.outer_final - c);
}

}  // namespace

void validate_spec(const FlowSpec& spec) {
  if (const auto* d = std::get_if<DiskFlow>(&spec)) {
    require(d->max_radius > 0.0 && std::isfinite(d->max_radius), errc::invalid_parameter,
            "disk flow needs a positive radius");
    return;
  }
  if (const auto* s = std::get_if<StarFlow>(&spec)) {
    require(s->base_radius > 0.0 && std::isfinite(s->base_radius), errc::invalid_parameter,
            "star flow needs a positive base radius");
    require(s->eps >= 0.0 && s->eps < 1.0, errc::invalid_parameter,
            "star flow modulation must satisfy 0 <= eps < 1");
    require(s->modes >= 0, errc::invalid_parameter, "star flow mode count must be nonnegative");
    return;
  }
  const auto& a = std::get<AnnulusFlow>(spec);
  require(a.inner_final > 0.0 && a.inner_final < a.skeleton_radius && a.skeleton_radius < a.outer_final,
          errc::invalid_parameter, "annulus flow needs 0 < inner_final < skeleton_radius < outer_final");
}

Point flow_center(const FlowSpec& spec) {
  return std::visit([](const auto& s) { return s.center; }, spec);
}

double skeleton_distance(const FlowSpec& spec, Point p) {
  if (const auto* a = std::get_if<AnnulusFlow>(&spec)) {
    const auto pol = to_polar(a->center, p);
    return std::abs(pol.r - a->skeleton_radius);
  }
  const Point c = flow_center(spec);
  return std::hypot(p.x - c.x, p.y - c.y);
}

double tau_of_point(const FlowSpec& spec, Point p) {
  validate_spec(spec);
  require(skeleton_distance(spec, p) > 0.0, errc::on_skeleton,
          "tau is undefined on the degenerate start of the flow");
  const double t = tau_raw(spec, p);
  require(t <= 1.0, errc::outside_domain, "point is not swept by the flow up to t = 1");
  return t;
}

namespace detail {

double rho_value(const FlowSpec& spec, Point p) {
  if (const auto* d = std::get_if<DiskFlow>(&spec)) {
    // F(t, theta) = t R e^{i theta}: det DF = t R^2, |dF/dtheta| = t R.
    (void)p;
    return d->max_radius;
  }
  if (const auto* s = std::get_if<StarFlow>(&spec)) {
    // R(t, theta) = t R0 g(theta): det DF = R_t R, |dF/dtheta| = sqrt(R_theta^2 + R^2),
    // and the t factors cancel.
    const auto pol = to_polar(s->center, p);
    const double g = 1.0 + s->eps * std::cos(s->modes * pol.theta);
    const double gp = -s->eps * s->modes * std::sin(s->modes * pol.theta);
    return s->base_radius * g * g / std::sqrt(gp * gp + g * g);
  }
  const auto& a = std::get<AnnulusFlow>(spec);
  // Radial sweep r(t) e^{i theta}: rho = |r'(t)|, constant per branch.
  const auto pol = to_polar(a.center, p);
  return pol.r < a.skeleton_radius ? a.skeleton_radius - a.inner_final
                                   : a.outer_final - a.skeleton_radius;
}

}  // namespace detail

double rho_at(const FlowSpec& spec, Point p) {
  validate_spec(spec);
  require(skeleton_distance(spec, p) > 0.0, errc::on_skeleton,
          "boundary speed is undefined on the degenerate start");
  require(tau_raw(spec, p) <= 1.0, errc::outside_domain, "point is not swept by the flow up to t = 1");
  return detail::rho_value(spec, p);
}

DomainFlow build_flow(const Grid& grid, const FlowSpec& spec, int shell_count) {
  validate_spec(spec);
  require(grid.n >= 3 && grid.h > 0.0, errc::invalid_parameter, "flow requires a valid grid");
  require(shell_count >= 2, errc::invalid_parameter,
          "flow needs at least two shells, got " + std::to_string(shell_count));

  const int M = shell_count;
  auto data = std::make_shared<DomainFlow::Data>();
  data->grid = grid;
  data->spec = spec;
  data->shell_count = M;
  data->time_grid.resize(static_cast<size_t>(M) + 1);
  for (int k = 0; k <= M; ++k) data->time_grid[static_cast<size_t>(k)] = static_cast<double>(k) / M;

  const int nsites = grid.size();
  data->tau.assign(static_cast<size_t>(nsites), kNaN);
  data->rho.assign(static_cast<size_t>(nsites), kNaN);
  data->shell_of.assign(static_cast<size_t>(nsites), -1);
  data->shells.assign(static_cast<size_t>(M) + 1, {});

  double min_skel_dist = std::numeric_limits<double>::infinity();
  for (int s = 0; s < nsites; ++s) {
    const Point p = grid.center(s);
    const double dist = skeleton_distance(spec, p);
    if (dist < grid.h / 2.0) {
      data->shell_of[static_cast<size_t>(s)] = 0;
      data->skeleton_sites.push_back(s);
      continue;
    }
    const double t = tau_raw(spec, p);
    if (!(t <= 1.0 + kTieRel)) continue;  // outside Omega(1)
    int k = static_cast<int>(std::ceil(t * M - kTieRel));
    k = std::clamp(k, 1, M);
    data->tau[static_cast<size_t>(s)] = t;
    const double rho = detail::rho_value(spec, p);
    require(rho > 0.0 && std::isfinite(rho), errc::invalid_parameter,
            "flow has nonpositive boundary speed at a lattice cell");
    data->rho[static_cast<size_t>(s)] = rho;
    data->shell_of[static_cast<size_t>(s)] = k;
    data->shells[static_cast<size_t>(k)].push_back(s);
    min_skel_dist = std::min(min_skel_dist, dist);
  }

  // Empty shells are legal: the masks at the two ends of such a step simply
  // coincide. Only a flow with no shell sites at all is rejected.
  std::size_t swept = 0;
  for (int k = 1; k <= M; ++k) swept += data->shells[static_cast<size_t>(k)].size();
  require(swept + data->skeleton_sites.size() > 0, errc::empty_domain,
          "flow sweeps no cell centers on this grid");
  require(swept > 0, errc::resolution_too_coarse,
          "flow resolves only skeleton cells; refine the grid or shrink the skeleton band");

  // Anchor sites for point masses: resolved skeleton cells, else the swept
  // cells closest to the skeleton.
  if (!data->skeleton_sites.empty()) {
    data->anchor_sites = data->skeleton_sites;
  } else {
    for (int s = 0; s < nsites; ++s) {
      if (data->shell_of[static_cast<size_t>(s)] <= 0) continue;
      if (skeleton_distance(spec, grid.center(s)) <= min_skel_dist * (1.0 + 1e-12))
        data->anchor_sites.push_back(s);
    }
  }

  // Nested masks: V_0 empty, V_k = skeleton cells plus shells 1..k.
  std::vector<std::uint8_t> inside(static_cast<size_t>(nsites), 0);
  data->masks.reserve(static_cast<size_t>(M) + 1);
  data->masks.push_back(DomainMask::from_inside_set(grid, inside));
  for (int s : data->skeleton_sites) inside[static_cast<size_t>(s)] = 1;
  for (int k = 1; k <= M; ++k) {
    for (int s : data->shells[static_cast<size_t>(k)]) inside[static_cast<size_t>(s)] = 1;
    data->masks.push_back(DomainMask::from_inside_set(grid, inside));
  }

  return DomainFlow(std::move(data));
}

int DomainFlow::time_index(double t) const {
  const int M = shell_count();
  const int k = static_cast<int>(std::lround(t * M));
  if (k < 0 || k > M || std::abs(t - time_point(std::clamp(k, 0, M))) > 1e-12)
    fail(errc::t_not_on_grid, "t = " + std::to_string(t) + " is not on the uniform time grid with " +
                                  std::to_string(M) + " shells");
  return k;
}

namespace {

// Nearest candidate site to padded lattice coordinates (bi, bj) by squared
// cell-index distance; ties resolve to the smallest site id.
int nearest_site(const Grid& g, int bi, int bj, std::span<const int> candidates) {
  long best = std::numeric_limits<long>::max();
  int who = -1;
  for (int s : candidates) {
    const auto [i, j] = g.coords(s);
    const long di = i - bi, dj = j - bj;
    const long d2 = di * di + dj * dj;
    if (d2 < best || (d2 == best && s < who)) {
      best = d2;
      who = s;
    }
  }
  return who;
}

}  // namespace

double DomainFlow::boundary_rho(int k, int boundary_idx) const {
  const DomainMask& m = mask(k);
  const BoundarySite& b = m.boundary()[static_cast<size_t>(boundary_idx)];
  int s = nearest_site(grid(), b.i, b.j, shell(k));
  if (s < 0) {
    std::vector<int> swept;
    for (int site : m.interior_sites())
      if (shell_index(site) >= 1) swept.push_back(site);
    s = nearest_site(grid(), b.i, b.j, swept);
  }
  require(s >= 0, errc::resolution_too_coarse,
          "mask V_" + std::to_string(k) + " has no swept cells to read the boundary speed from");
  return rho(s);
}

std::vector<double> DomainFlow::boundary_rho_profile(int k) const {
  const DomainMask& m = mask(k);
  std::vector<double> out(static_cast<size_t>(m.boundary_count()));
  std::span<const int> shell_sites = shell(k);
  std::vector<int> swept;
  if (shell_sites.empty()) {
    for (int site : m.interior_sites())
      if (shell_index(site) >= 1) swept.push_back(site);
    require(m.boundary_count() == 0 || !swept.empty(), errc::resolution_too_coarse,
            "mask V_" + std::to_string(k) + " has no swept cells to read the boundary speed from");
    shell_sites = swept;
  }
  for (int b = 0; b < m.boundary_count(); ++b) {
    const BoundarySite& site = m.boundary()[static_cast<size_t>(b)];
    out[static_cast<size_t>(b)] = rho(nearest_site(grid(), site.i, site.j, shell_sites));
  }
  return out;
}

std::vector<double> DomainFlow::boundary_arclength(int k) const {
  const DomainMask& m = mask(k);
  const int L = m.boundary_count();
  std::vector<double> out(static_cast<size_t>(L), 0.0);
  if (L == 0) return out;
  const double t = time_point(k);

  // Boundary branches as theta -> (point on curve, |dF/dtheta|).
  using Branch = std::function<void(double, Point&, double&)>;
  std::vector<Branch> branches;
  const FlowSpec& sp = spec();
  if (const auto* d = std::get_if<DiskFlow>(&sp)) {
    branches.push_back([d, t](double th, Point& p, double& speed) {
      const double r = t * d->max_radius;
      p = {d->center.x + r * std::cos(th), d->center.y + r * std::sin(th)};
      speed = r;
    });
  } else if (const auto* s = std::get_if<StarFlow>(&sp)) {
    branches.push_back([s, t](double th, Point& p, double& speed) {
      const double g = 1.0 + s->eps * std::cos(s->modes * th);
      const double gp = -s->eps * s->modes * std::sin(s->modes * th);
      const double r = t * s->base_radius * g;
      p = {s->center.x + r * std::cos(th), s->center.y + r * std::sin(th)};
      speed = t * s->base_radius * std::hypot(g, gp);
    });
  } else {
    const auto& a = std::get<AnnulusFlow>(sp);
    const double inner = a.skeleton_radius - t * (a.skeleton_radius - a.inner_final);
    const double outer = a.skeleton_radius + t * (a.outer_final - a.skeleton_radius);
    for (double r : {inner, outer}) {
      branches.push_back([&a, r](double th, Point& p, double& speed) {
        p = {a.center.x + r * std::cos(th), a.center.y + r * std::sin(th)};
        speed = r;
      });
    }
  }

  std::vector<Point> centers(static_cast<size_t>(L));
  for (int b = 0; b < L; ++b) centers[static_cast<size_t>(b)] = m.boundary_center(b);

  const int samples = std::max(4096, 64 * L);
  const double dtheta = 2.0 * M_PI / samples;
  for (const Branch& branch : branches) {
    for (int i = 0; i < samples; ++i) {
      Point p;
      double speed = 0.0;
      branch((i + 0.5) * dtheta, p, speed);
      int who = 0;
      double best = std::numeric_limits<double>::infinity();
      for (int b = 0; b < L; ++b) {
        const double dx = centers[static_cast<size_t>(b)].x - p.x;
        const double dy = centers[static_cast<size_t>(b)].y - p.y;
        const double d2 = dx * dx + dy * dy;
        if (d2 < best) {
          best = d2;
          who = b;
        }
      }
      out[static_cast<size_t>(who)] += speed * dtheta;
    }
  }
  for (double& v : out)
    if (v == 0.0) v = grid().h;
  return out;
}

PolarIntegral polar_integrate(const DomainFlow& flow, const std::function<double(Point)>& f, double t) {
  const int K = flow.time_index(t);
  const Grid& g = flow.grid();
  PolarIntegral out;
  for (int k = 1; k <= K; ++k) {
    const double dt = flow.delta_tau(k);
    double area = 0.0, flux = 0.0;
    for (int s : flow.shell(k)) {
      const double v = f(g.center(s));
      area += v;
      flux += v * flow.rho(s);
    }
    out.area_form += area * g.h * g.h;
    out.shell_form += flux * g.h * dt;
  }
  return out;
}

}  // namespace hgff
