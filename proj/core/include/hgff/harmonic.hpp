#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "hgff/dirichlet.hpp"
#include "hgff/flow.hpp"

namespace hgff {

// Values on the boundary ring of a mask together with the arclength weights
// they are a density against.
struct BoundaryFunction {
  std::vector<double> values;
  std::vector<double> weights;
};

// Exit distribution of the simple random walk: hm(z, a) is the probability
// that the walk from interior cell z leaves the mask through boundary cell a.
// Columns are harmonic in the interior away from the stencil coupling to a,
// rows sum to one.  Realized through the mask's Dirichlet factorization:
// hm = L^{-1} B where B couples interior cells to adjacent boundary cells.
class HarmonicMeasure {
 public:
  explicit HarmonicMeasure(std::shared_ptr<const GreenSolver> solver);

  const DomainMask& mask() const { return solver_->mask(); }
  const GreenSolver& solver() const { return *solver_; }

  // Harmonic extension u(z) = sum_a hm(z, a) phi(a) of boundary values.
  Eigen::VectorXd extend(const Eigen::VectorXd& boundary_values) const;
  Eigen::MatrixXd extend(const Eigen::MatrixXd& boundary_values) const;

  // Exit distribution from one interior site (a row of the hm matrix).
  Eigen::VectorXd row(int site) const;

  // Columns hm(., a) for selected boundary cells, batched through one
  // factorization.
  Eigen::MatrixXd kernel_columns(std::span<const int> boundary_indices) const;

  // Sweep of interior mass onto the boundary as a density:
  //   phi(a) = sum_z hm(z, a) f(z) h^2 / ds(a),
  // the exact adjoint of extension under the pairing sum_a phi'(a) phi(a)
  // ds(a).  Weights default to the mask's (one cell width); flow contexts
  // pass the flow-effective arclength instead.
  BoundaryFunction sweep(const Eigen::VectorXd& f, std::span<const double> ds = {}) const;

  // Dense interior x boundary matrix, built on first use and cached.
  const Eigen::MatrixXd& matrix() const;

 private:
  std::shared_ptr<const GreenSolver> solver_;
  Eigen::SparseMatrix<double> coupling_;  // B: interior x boundary, 1/h^2 per shared edge
  mutable std::optional<Eigen::MatrixXd> matrix_;
  mutable std::mutex matrix_mutex_;
};

// Boundary cell of the mask nearest to the given interior site (squared
// lattice distance, ties to the smallest boundary index).
int nearest_boundary_index(const DomainMask& mask, int site);

// A weighted Dirac mass sitting at a lattice cell.
struct PointMass {
  int site = 0;
  double weight = 1.0;
};

// Density vector on the mask's interior with value weight / h^2 at each mass
// location, so that the h^2-weighted pairing with f returns sum w_i f(z_i).
Eigen::VectorXd point_mass_vector(const DomainMask& mask, std::span<const PointMass> masses);

// Zero-padded transfer of interior vectors between masks on one grid.
// embed requires every source cell to be inside the target mask;
// restrict_to keeps the overlap and drops the rest.
Eigen::VectorXd embed_interior(const DomainMask& from, const DomainMask& to, const Eigen::VectorXd& v);
Eigen::VectorXd restrict_interior(const DomainMask& from, const DomainMask& to, const Eigen::VectorXd& v);

// Instantaneous variance rate of <f, Psi_t> at grid time t_k:
//   kappa(t_k) = sum_a (sweep_k f)(a)^2 rho(a) ds(a)
// with the flow-effective arclength ds and rho read at the nearest shell
// cell.  f lives on the interior of V_M and is restricted to V_k; an empty
// mask yields 0.
double kappa_at(const DomainFlow& flow, const HarmonicMeasure& hm, int k, const Eigen::VectorXd& f_outer,
                std::span<const double> ds, std::span<const double> rho);

// Modified Green potential: equal to the full-domain potential G_1 f outside
// V_k and to the harmonic extension of its boundary trace inside V_k.  f is
// a combination of point masses at skeleton/anchor cells; the result lives
// on the interior of V_M.  `inner` is the measure of V_k and may be null
// exactly when V_k is empty (nothing to replace).
Eigen::VectorXd modified_green_potential(const DomainFlow& flow, const GreenSolver& outer,
                                         const HarmonicMeasure* inner, std::span<const PointMass> f,
                                         int k);

}  // namespace hgff
