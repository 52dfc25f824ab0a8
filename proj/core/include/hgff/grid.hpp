#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "hgff/error.hpp"

namespace hgff {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Uniform square lattice of n x n cells with spacing h.  `origin` is the
// coordinate of the lower-left cell center; cell (i, j) sits at
// origin + (i*h, j*h).
struct Grid {
  int n = 0;
  double h = 0.0;
  Point origin;

  int size() const { return n * n; }
  int site(int i, int j) const { return j * n + i; }
  std::pair<int, int> coords(int s) const { return {s % n, s / n}; }
  bool contains(int i, int j) const { return i >= 0 && i < n && j >= 0 && j < n; }
  Point center(int i, int j) const { return {origin.x + i * h, origin.y + j * h}; }
  Point center(int s) const {
    auto [i, j] = coords(s);
    return center(i, j);
  }
};

Grid build_grid(int n, double side, Point origin);

// Convenience: grid whose n x n cells tile the square [-half, half]^2.
Grid build_grid_box(int n, double half);

bool same_grid(const Grid& a, const Grid& b);

// A boundary site is a cell outside the domain that is 4-adjacent to an
// inside cell.  It may lie one ring beyond the grid proper (i or j equal to
// -1 or n), so it is identified by lattice coordinates rather than a site id.
struct BoundarySite {
  int i = 0;
  int j = 0;
  double ds = 0.0;  // arclength weight, one cell width
};

// Immutable cell classification of a domain against a grid.  Interior sites
// get dense indices 0..interior_count()-1 in row-major site order; the
// boundary ring is enumerated in the same lattice order.
class DomainMask {
 public:
  DomainMask() = default;

  static DomainMask from_predicate(const Grid& grid, const std::function<bool(Point)>& inside_test);
  // Direct construction from an inside bitmap (size n*n).  Unlike
  // from_predicate this permits an empty domain; flows use it for the t=0 mask.
  static DomainMask from_inside_set(const Grid& grid, std::vector<std::uint8_t> inside);

  const Grid& grid() const { return d_->grid; }
  bool inside(int site) const { return d_->inside[static_cast<size_t>(site)] != 0; }
  bool inside(int i, int j) const { return grid().contains(i, j) && inside(grid().site(i, j)); }

  int interior_count() const { return static_cast<int>(d_->interior_sites.size()); }
  // Dense index of a site, or -1 when the site is not inside.
  int interior_index(int site) const { return d_->interior_index[static_cast<size_t>(site)]; }
  int interior_site(int k) const { return d_->interior_sites[static_cast<size_t>(k)]; }
  std::span<const int> interior_sites() const { return d_->interior_sites; }

  std::span<const BoundarySite> boundary() const { return d_->boundary; }
  int boundary_count() const { return static_cast<int>(d_->boundary.size()); }
  // Index into boundary() for padded coordinates (i, j in [-1, n]), or -1.
  int boundary_index(int i, int j) const;

  Point boundary_center(int b) const {
    const BoundarySite& s = d_->boundary[static_cast<size_t>(b)];
    return grid().center(s.i, s.j);
  }

  bool identical_to(const DomainMask& other) const { return d_ == other.d_; }

 private:
  struct Data {
    Grid grid;
    std::vector<std::uint8_t> inside;
    std::vector<int> interior_index;
    std::vector<int> interior_sites;
    std::vector<BoundarySite> boundary;
    std::vector<int> boundary_lookup;  // (n+2)^2 padded-coordinate table
  };

  explicit DomainMask(std::shared_ptr<const Data> d) : d_(std::move(d)) {}
  static DomainMask finish(Data data);

  std::shared_ptr<const Data> d_;
};

DomainMask mask_from_predicate(const Grid& grid, const std::function<bool(Point)>& inside_test);

// True when every inside site of `a` is inside `b`.  Throws grid-mismatch
// when the two masks live on different grids.
bool is_nested(const DomainMask& a, const DomainMask& b);

}  // namespace hgff
