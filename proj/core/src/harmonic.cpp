#include "hgff/harmonic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace hgff {
namespace {

constexpr int kDi[4] = {1, -1, 0, 0};
constexpr int kDj[4] = {0, 0, 1, -1};

Eigen::SparseMatrix<double> build_coupling(const DomainMask& mask) {
  const Grid& g = mask.grid();
  const double w = 1.0 / (g.h * g.h);
  std::vector<Eigen::Triplet<double>> trips;
  for (int k = 0; k < mask.interior_count(); ++k) {
    const auto [i, j] = g.coords(mask.interior_site(k));
    for (int d = 0; d < 4; ++d) {
      const int ni = i + kDi[d], nj = j + kDj[d];
      if (mask.inside(ni, nj)) continue;
      const int b = mask.boundary_index(ni, nj);
      require(b >= 0, errc::mask_mismatch, "mask boundary ring is incomplete");
      trips.emplace_back(k, b, w);
    }
  }
  Eigen::SparseMatrix<double> coupling(mask.interior_count(), mask.boundary_count());
  coupling.setFromTriplets(trips.begin(), trips.end());
  coupling.makeCompressed();
  return coupling;
}

}  // namespace

HarmonicMeasure::HarmonicMeasure(std::shared_ptr<const GreenSolver> solver)
    : solver_(std::move(solver)), coupling_(build_coupling(solver_->mask())) {}

Eigen::VectorXd HarmonicMeasure::extend(const Eigen::VectorXd& boundary_values) const {
  require(boundary_values.size() == coupling_.cols(), errc::mask_mismatch,
          "boundary data has " + std::to_string(boundary_values.size()) + " values, mask has " +
              std::to_string(coupling_.cols()) + " boundary cells");
  return solver_->solve(Eigen::VectorXd(coupling_ * boundary_values));
}

Eigen::MatrixXd HarmonicMeasure::extend(const Eigen::MatrixXd& boundary_values) const {
  require(boundary_values.rows() == coupling_.cols(), errc::mask_mismatch,
          "boundary data has " + std::to_string(boundary_values.rows()) + " rows, mask has " +
              std::to_string(coupling_.cols()) + " boundary cells");
  return solver_->solve(Eigen::MatrixXd(coupling_ * boundary_values));
}

Eigen::VectorXd HarmonicMeasure::row(int site) const {
  const DomainMask& m = mask();
  const int idx = m.interior_index(site);
  require(idx >= 0, errc::outside_domain, "exit distribution requested from a cell outside the domain");
  Eigen::VectorXd e = Eigen::VectorXd::Zero(m.interior_count());
  e[idx] = 1.0;
  return coupling_.transpose() * solver_->solve(e);
}

Eigen::MatrixXd HarmonicMeasure::kernel_columns(std::span<const int> boundary_indices) const {
  const DomainMask& m = mask();
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(m.interior_count(), static_cast<Eigen::Index>(boundary_indices.size()));
  for (Eigen::Index c = 0; c < rhs.cols(); ++c) {
    const int b = boundary_indices[static_cast<size_t>(c)];
    require(b >= 0 && b < m.boundary_count(), errc::invalid_parameter,
            "boundary index " + std::to_string(b) + " out of range");
    for (Eigen::SparseMatrix<double>::InnerIterator it(coupling_, b); it; ++it)
      rhs(it.row(), c) = it.value();
  }
  return solver_->solve(rhs);
}

BoundaryFunction HarmonicMeasure::sweep(const Eigen::VectorXd& f, std::span<const double> ds) const {
  const DomainMask& m = mask();
  require(f.size() == m.interior_count(), errc::mask_mismatch,
          "sweep input has " + std::to_string(f.size()) + " values, mask has " +
              std::to_string(m.interior_count()) + " interior cells");
  BoundaryFunction out;
  out.weights.resize(static_cast<size_t>(m.boundary_count()));
  if (ds.empty()) {
    for (int b = 0; b < m.boundary_count(); ++b)
      out.weights[static_cast<size_t>(b)] = m.boundary()[static_cast<size_t>(b)].ds;
  } else {
    require(static_cast<int>(ds.size()) == m.boundary_count(), errc::invalid_parameter,
            "arclength weights do not match the boundary ring");
    out.weights.assign(ds.begin(), ds.end());
  }
  const double h = m.grid().h;
  const Eigen::VectorXd mass = coupling_.transpose() * solver_->solve(f);
  out.values.resize(static_cast<size_t>(m.boundary_count()));
  for (int b = 0; b < m.boundary_count(); ++b)
    out.values[static_cast<size_t>(b)] = mass[b] * h * h / out.weights[static_cast<size_t>(b)];
  return out;
}

const Eigen::MatrixXd& HarmonicMeasure::matrix() const {
  std::scoped_lock lock(matrix_mutex_);
  if (!matrix_) {
    std::vector<int> all(static_cast<size_t>(mask().boundary_count()));
    for (int b = 0; b < mask().boundary_count(); ++b) all[static_cast<size_t>(b)] = b;
    matrix_ = kernel_columns(all);
  }
  return *matrix_;
}

int nearest_boundary_index(const DomainMask& mask, int site) {
  const auto [i, j] = mask.grid().coords(site);
  long best = std::numeric_limits<long>::max();
  int who = -1;
  for (int b = 0; b < mask.boundary_count(); ++b) {
    const BoundarySite& s = mask.boundary()[static_cast<size_t>(b)];
    const long di = s.i - i, dj = s.j - j;
    const long d2 = di * di + dj * dj;
    if (d2 < best) {
      best = d2;
      who = b;
    }
  }
  require(who >= 0, errc::empty_domain, "mask has no boundary cells");
  return who;
}

Eigen::VectorXd point_mass_vector(const DomainMask& mask, std::span<const PointMass> masses) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(mask.interior_count());
  const double h = mask.grid().h;
  for (const PointMass& pm : masses) {
    const int idx = mask.interior_index(pm.site);
    require(idx >= 0, errc::outside_domain, "point mass sits outside the domain");
    f[idx] += pm.weight / (h * h);
  }
  return f;
}

Eigen::VectorXd embed_interior(const DomainMask& from, const DomainMask& to, const Eigen::VectorXd& v) {
  require(same_grid(from.grid(), to.grid()), errc::grid_mismatch,
          "interior transfer between different grids");
  require(v.size() == from.interior_count(), errc::mask_mismatch,
          "vector does not match the source mask");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(to.interior_count());
  for (int k = 0; k < from.interior_count(); ++k) {
    const int idx = to.interior_index(from.interior_site(k));
    require(idx >= 0, errc::mask_mismatch, "embedding target does not contain the source mask");
    out[idx] = v[k];
  }
  return out;
}

Eigen::VectorXd restrict_interior(const DomainMask& from, const DomainMask& to, const Eigen::VectorXd& v) {
  require(same_grid(from.grid(), to.grid()), errc::grid_mismatch,
          "interior transfer between different grids");
  require(v.size() == from.interior_count(), errc::mask_mismatch,
          "vector does not match the source mask");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(to.interior_count());
  for (int k = 0; k < to.interior_count(); ++k) {
    const int idx = from.interior_index(to.interior_site(k));
    if (idx >= 0) out[k] = v[idx];
  }
  return out;
}

double kappa_at(const DomainFlow& flow, const HarmonicMeasure& hm, int k, const Eigen::VectorXd& f_outer,
                std::span<const double> ds, std::span<const double> rho) {
  const DomainMask& mk = flow.mask(k);
  if (mk.interior_count() == 0) return 0.0;
  require(hm.mask().identical_to(mk), errc::mask_mismatch,
          "harmonic measure does not belong to mask V_" + std::to_string(k));
  require(static_cast<int>(ds.size()) == mk.boundary_count() &&
              static_cast<int>(rho.size()) == mk.boundary_count(),
          errc::invalid_parameter, "boundary weights do not match the boundary ring");
  const Eigen::VectorXd fk = restrict_interior(flow.mask(flow.shell_count()), mk, f_outer);
  const BoundaryFunction swept = hm.sweep(fk, ds);
  double kappa = 0.0;
  for (int b = 0; b < mk.boundary_count(); ++b) {
    const double phi = swept.values[static_cast<size_t>(b)];
    kappa += phi * phi * rho[static_cast<size_t>(b)] * ds[static_cast<size_t>(b)];
  }
  return kappa;
}

Eigen::VectorXd modified_green_potential(const DomainFlow& flow, const GreenSolver& outer,
                                         const HarmonicMeasure* inner, std::span<const PointMass> f,
                                         int k) {
  const int M = flow.shell_count();
  const DomainMask& mask_outer = flow.mask(M);
  require(outer.mask().identical_to(mask_outer), errc::mask_mismatch,
          "outer solver does not belong to the final mask");
  for (const PointMass& pm : f) {
    const auto skel = flow.skeleton_sites();
    const auto anch = flow.anchor_sites();
    const bool ok = std::find(skel.begin(), skel.end(), pm.site) != skel.end() ||
                    std::find(anch.begin(), anch.end(), pm.site) != anch.end();
    require(ok, errc::support_not_on_skeleton,
            "point mass must sit on a skeleton or anchor cell");
  }
  Eigen::VectorXd u = outer.solve(point_mass_vector(mask_outer, f));

  const DomainMask& mk = flow.mask(k);
  if (mk.interior_count() == 0) return u;
  require(inner != nullptr && inner->mask().identical_to(mk), errc::mask_mismatch,
          "inner harmonic measure does not belong to mask V_" + std::to_string(k));

  Eigen::VectorXd trace = Eigen::VectorXd::Zero(mk.boundary_count());
  const Grid& g = flow.grid();
  for (int b = 0; b < mk.boundary_count(); ++b) {
    const BoundarySite& s = mk.boundary()[static_cast<size_t>(b)];
    if (!g.contains(s.i, s.j)) continue;
    const int idx = mask_outer.interior_index(g.site(s.i, s.j));
    if (idx >= 0) trace[b] = u[idx];
  }
  const Eigen::VectorXd ext = inner->extend(trace);
  for (int c = 0; c < mk.interior_count(); ++c) {
    const int idx = mask_outer.interior_index(mk.interior_site(c));
    require(idx >= 0, errc::mask_mismatch, "flow masks are not nested");
    u[idx] = ext[c];
  }
  return u;
}

}  // namespace hgff
