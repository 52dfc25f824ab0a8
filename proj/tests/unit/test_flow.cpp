#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <vector>

#include "hgff/error.hpp"
#include "hgff/flow.hpp"

using namespace hgff;

namespace {

constexpr double kPi = std::numbers::pi;

Point star_point(const StarFlow& s, double t, double theta) {
  const double r = t * s.base_radius * (1.0 + s.eps * std::cos(s.modes * theta));
  return {s.center.x + r * std::cos(theta), s.center.y + r * std::sin(theta)};
}

// Finite-difference boundary speed |det DF| / |dF/dtheta| of the sweep map.
double star_rho_fd(const StarFlow& s, double t, double theta) {
  const double dt = 1e-5, dth = 1e-5;
  Point pt1 = star_point(s, t + dt, theta), pt0 = star_point(s, t - dt, theta);
  Point qa = star_point(s, t, theta + dth), qb = star_point(s, t, theta - dth);
  const double ft_x = (pt1.x - pt0.x) / (2 * dt), ft_y = (pt1.y - pt0.y) / (2 * dt);
  const double fh_x = (qa.x - qb.x) / (2 * dth), fh_y = (qa.y - qb.y) / (2 * dth);
  const double det = ft_x * fh_y - ft_y * fh_x;
  return std::abs(det) / std::hypot(fh_x, fh_y);
}

DomainFlow disk_flow(int n, int shells) {
  return build_flow(build_grid_box(n, 4.0 / 3.0), DiskFlow{{0.0, 0.0}, 1.0}, shells);
}

}  // namespace

TEST_SUITE_BEGIN("flow");

TEST_CASE("spec validation rejects degenerate flows") {
  CHECK_THROWS_AS(validate_spec(DiskFlow{{0, 0}, -1.0}), Error);
  CHECK_THROWS_AS(validate_spec(StarFlow{{0, 0}, 1.0, 1.5, 5}), Error);
  CHECK_THROWS_AS(validate_spec(StarFlow{{0, 0}, 1.0, 0.2, -1}), Error);
  CHECK_THROWS_AS(validate_spec(AnnulusFlow{{0, 0}, 0.7, 1.0, 0.6}), Error);
  CHECK_NOTHROW(validate_spec(DiskFlow{{0, 0}, 1.0}));
}

TEST_CASE("entry time and sweep speed on the disk") {
  DiskFlow disk{{0.0, 0.0}, 1.0};
  CHECK(tau_of_point(disk, {0.5, 0.0}) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(tau_of_point(disk, {0.0, -0.25}) == doctest::Approx(0.25).epsilon(1e-12));
  // rho = max_radius for concentric circles growing at unit rate.
  CHECK(rho_at(disk, {0.3, 0.4}) == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(tau_of_point(disk, {1.5, 0.0}), Error);
  try {
    tau_of_point(disk, {1.5, 0.0});
  } catch (const Error& e) {
    CHECK(e.code() == errc::outside_domain);
  }
  try {
    tau_of_point(disk, {0.0, 0.0});
  } catch (const Error& e) {
    CHECK(e.code() == errc::on_skeleton);
  }
}

TEST_CASE("star flow speed matches a finite-difference Jacobian") {
  StarFlow star{{0.1, -0.05}, 0.9, 0.2, 5};
  for (double t : {0.3, 0.6, 0.95})
    for (double theta : {0.1, 0.97, 2.3, 4.0, 5.9}) {
      Point p = star_point(star, t, theta);
      const double expect = star_rho_fd(star, t, theta);
      CHECK(rho_at(star, p) == doctest::Approx(expect).epsilon(1e-6));
      CHECK(tau_of_point(star, p) == doctest::Approx(t).epsilon(1e-10));
    }
}

TEST_CASE("annulus flow sweeps both rims at constant speed") {
  AnnulusFlow ann{{0.0, 0.0}, 0.25, 1.0, 0.6};
  // Outer branch: radius c + t(b-c); inner branch: radius c - t(c-a).
  Point outer{0.0, 0.6 + 0.5 * 0.4};
  Point inner{0.6 - 0.5 * 0.35, 0.0};
  CHECK(tau_of_point(ann, outer) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(tau_of_point(ann, inner) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(rho_at(ann, outer) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(rho_at(ann, inner) == doctest::Approx(0.35).epsilon(1e-12));
  try {
    tau_of_point(ann, {0.0, 0.6});
  } catch (const Error& e) {
    CHECK(e.code() == errc::on_skeleton);
  }
}

TEST_CASE("lattice flow is nested with shells partitioning the swept cells") {
  DomainFlow flow = disk_flow(32, 10);
  const int m = flow.shell_count();
  CHECK(m == 10);
  CHECK(flow.mask(0).interior_count() == 0);
  CHECK(flow.time_point(0) == 0.0);
  CHECK(flow.time_point(m) == doctest::Approx(1.0).epsilon(1e-15));

  std::set<int> seen;
  for (int k = 1; k <= m; ++k) {
    CHECK(flow.delta_tau(k) == doctest::Approx(1.0 / m).epsilon(1e-12));
    // Nesting: every interior cell of V_{k-1} is interior to V_k.
    const DomainMask& prev = flow.mask(k - 1);
    const DomainMask& cur = flow.mask(k);
    for (int i = 0; i < prev.interior_count(); ++i) CHECK(cur.inside(prev.interior_site(i)));
    for (int site : flow.shell(k)) {
      CHECK(flow.shell_index(site) == k);
      CHECK(flow.tau(site) > flow.time_point(k - 1));
      CHECK(flow.tau(site) <= flow.time_point(k) + 1e-12);
      CHECK(cur.inside(site));
      CHECK_FALSE(prev.inside(site));
      CHECK(seen.insert(site).second);  // shells are disjoint
    }
  }
  // Shells plus skeleton cells cover the final mask exactly.
  const DomainMask& outer = flow.mask(m);
  size_t covered = seen.size() + flow.skeleton_sites().size();
  CHECK(covered == static_cast<size_t>(outer.interior_count()));
  CHECK_FALSE(flow.anchor_sites().empty());
  for (int site : flow.skeleton_sites()) {
    CHECK(flow.shell_index(site) == 0);
    CHECK(flow.mask(1).inside(site));
  }

  CHECK(flow.time_index(0.5) == 5);
  CHECK(flow.time_index(1.0) == m);
  CHECK_THROWS_AS(flow.time_index(0.33), Error);
  try {
    flow.time_index(0.33);
  } catch (const Error& e) {
    CHECK(e.code() == errc::t_not_on_grid);
  }
}

TEST_CASE("flow arclength weights sum to the analytic boundary length") {
  DomainFlow flow = disk_flow(48, 12);
  for (int k : {3, 6, 9, 12}) {
    std::vector<double> ds = flow.boundary_arclength(k);
    CHECK(static_cast<int>(ds.size()) == flow.mask(k).boundary_count());
    double total = 0.0;
    for (double v : ds) {
      CHECK(v > 0.0);
      total += v;
    }
    const double expect = 2.0 * kPi * flow.time_point(k);
    CHECK(total == doctest::Approx(expect).epsilon(1e-6));
  }

  // Star flow: compare against a dense quadrature of the curve length.
  StarFlow star{{0.0, 0.0}, 1.0, 0.2, 5};
  DomainFlow sflow = build_flow(build_grid_box(48, 4.0 / 3.0), star, 12);
  std::vector<double> ds = sflow.boundary_arclength(12);
  double total = 0.0;
  for (double v : ds) total += v;
  const int quad = 400000;
  double expect = 0.0;
  for (int i = 0; i < quad; ++i) {
    const double th = (i + 0.5) * 2.0 * kPi / quad;
    const double r = 1.0 + 0.2 * std::cos(5 * th);
    const double rp = -0.2 * 5 * std::sin(5 * th);
    expect += std::hypot(r, rp) * 2.0 * kPi / quad;
  }
  CHECK(total == doctest::Approx(expect).epsilon(1e-5));
}

TEST_CASE("annulus masks keep the hole and carry two rims") {
  AnnulusFlow ann{{0.0, 0.0}, 0.25, 1.0, 0.6};
  DomainFlow flow = build_flow(build_grid_box(48, 4.0 / 3.0), ann, 8);
  const DomainMask& outer = flow.mask(flow.shell_count());
  int inside_hole = 0;
  for (int i = 0; i < outer.interior_count(); ++i) {
    Point p = outer.grid().center(outer.interior_site(i));
    if (std::hypot(p.x, p.y) < 0.2) ++inside_hole;
  }
  CHECK(inside_hole == 0);
  CHECK_FALSE(flow.skeleton_sites().empty());  // cells astride the limit circle
}

TEST_CASE("the two polar quadratures converge to each other on refinement") {
  // A non-constant integrand, so the staircase cell sum and the shell-curve
  // quadrature genuinely differ at finite resolution.
  auto deviation = [](int n, int shells) {
    DomainFlow flow = disk_flow(n, shells);
    PolarIntegral p = polar_integrate(flow, [](Point q) { return 0.5 + q.x * q.x; }, 0.75);
    return std::abs(p.shell_form - p.area_form) / p.area_form;
  };
  const double coarse = deviation(64, 24);
  const double fine = deviation(128, 48);
  CHECK(fine < coarse);
  CHECK(fine < 0.05);

  // And both forms approximate the disk area pi (0.75)^2.
  DomainFlow flow = disk_flow(128, 48);
  PolarIntegral p = polar_integrate(flow, [](Point) { return 1.0; }, 0.75);
  const double area = kPi * 0.75 * 0.75;
  CHECK(p.area_form == doctest::Approx(area).epsilon(0.05));
  CHECK(p.shell_form == doctest::Approx(area).epsilon(0.05));
}

TEST_CASE("under-resolved flows are rejected") {
  Grid grid = build_grid_box(8, 4.0 / 3.0);
  // A hairline annulus keeps skeleton cells but sweeps no lattice cell.
  AnnulusFlow hairline{{0.0, 0.0}, 0.599, 0.601, 0.6};
  CHECK_THROWS_AS(build_flow(grid, hairline, 4), Error);
  try {
    build_flow(grid, hairline, 4);
  } catch (const Error& e) {
    CHECK(e.code() == errc::resolution_too_coarse);
  }
  // One shell is not a flow.
  CHECK_THROWS_AS(build_flow(grid, DiskFlow{{0, 0}, 1.0}, 1), Error);
}

TEST_SUITE_END();
