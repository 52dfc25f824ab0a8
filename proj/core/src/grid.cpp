#include "hgff/grid.hpp"

#include <cmath>

namespace hgff {

Grid build_grid(int n, double side, Point origin) {
  require(n >= 3, errc::invalid_parameter, "grid needs at least 3 cells per side, got " + std::to_string(n));
  require(side > 0.0 && std::isfinite(side), errc::invalid_parameter, "grid side must be positive");
  return Grid{n, side / n, origin};
}

Grid build_grid_box(int n, double half) {
  require(half > 0.0, errc::invalid_parameter, "box half-width must be positive");
  const double side = 2.0 * half;
  const double h = side / n;
  return build_grid(n, side, Point{-half + h / 2.0, -half + h / 2.0});
}

bool same_grid(const Grid& a, const Grid& b) {
  return a.n == b.n && a.h == b.h && a.origin.x == b.origin.x && a.origin.y == b.origin.y;
}

DomainMask DomainMask::finish(Data data) {
  const Grid& g = data.grid;
  const int n = g.n;
  data.interior_index.assign(static_cast<size_t>(g.size()), -1);
  data.interior_sites.clear();
  for (int s = 0; s < g.size(); ++s) {
    if (data.inside[static_cast<size_t>(s)]) {
      data.interior_index[static_cast<size_t>(s)] = static_cast<int>(data.interior_sites.size());
      data.interior_sites.push_back(s);
    }
  }

  // Boundary ring: outside cells (padded one ring beyond the grid) 4-adjacent
  // to an inside cell, enumerated in padded row-major order.
  const int pn = n + 2;
  data.boundary_lookup.assign(static_cast<size_t>(pn * pn), -1);
  data.boundary.clear();
  auto is_inside = [&](int i, int j) {
    return g.contains(i, j) && data.inside[static_cast<size_t>(g.site(i, j))] != 0;
  };
  for (int j = -1; j <= n; ++j) {
    for (int i = -1; i <= n; ++i) {
      if (is_inside(i, j)) continue;
      const bool touches = is_inside(i - 1, j) || is_inside(i + 1, j) || is_inside(i, j - 1) || is_inside(i, j + 1);
      if (!touches) continue;
      data.boundary_lookup[static_cast<size_t>((j + 1) * pn + (i + 1))] = static_cast<int>(data.boundary.size());
      data.boundary.push_back(BoundarySite{i, j, g.h});
    }
  }
  return DomainMask(std::make_shared<const Data>(std::move(data)));
}

DomainMask DomainMask::from_predicate(const Grid& grid, const std::function<bool(Point)>& inside_test) {
  require(grid.n >= 3 && grid.h > 0.0, errc::invalid_parameter, "mask requires a valid grid");
  Data data;
  data.grid = grid;
  data.inside.assign(static_cast<size_t>(grid.size()), 0);
  bool any = false;
  for (int s = 0; s < grid.size(); ++s) {
    if (inside_test(grid.center(s))) {
      data.inside[static_cast<size_t>(s)] = 1;
      any = true;
    }
  }
  require(any, errc::empty_domain, "predicate excludes every cell center");
  return finish(std::move(data));
}

DomainMask DomainMask::from_inside_set(const Grid& grid, std::vector<std::uint8_t> inside) {
  require(grid.n >= 3 && grid.h > 0.0, errc::invalid_parameter, "mask requires a valid grid");
  require(static_cast<int>(inside.size()) == grid.size(), errc::invalid_parameter,
          "inside bitmap size does not match grid");
  Data data;
  data.grid = grid;
  data.inside = std::move(inside);
  return finish(std::move(data));
}

int DomainMask::boundary_index(int i, int j) const {
  const int n = grid().n, pn = n + 2;
  if (i < -1 || i > n || j < -1 || j > n) return -1;
  return d_->boundary_lookup[static_cast<size_t>((j + 1) * pn + (i + 1))];
}

DomainMask mask_from_predicate(const Grid& grid, const std::function<bool(Point)>& inside_test) {
  return DomainMask::from_predicate(grid, inside_test);
}

bool is_nested(const DomainMask& a, const DomainMask& b) {
  require(same_grid(a.grid(), b.grid()), errc::grid_mismatch, "nesting test requires a common grid");
  for (int s : a.interior_sites())
    if (!b.inside(s)) return false;
  return true;
}

}  // namespace hgff
