#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <mutex>
#include <optional>

#include "hgff/grid.hpp"

namespace hgff {

// Dense matrices (Green kernels, full spectra) are only materialized up to
// this many interior sites.
inline constexpr int kDenseSiteCap = 20000;

// Five-point Dirichlet Laplacian (4u - sum of inside neighbours) / h^2 on the
// interior sites of a mask, in dense-index order.  Symmetric positive definite.
class LaplaceOperator {
 public:
  explicit LaplaceOperator(DomainMask mask);

  const DomainMask& mask() const { return mask_; }
  const Eigen::SparseMatrix<double>& matrix() const { return matrix_; }
  double h() const { return mask_.grid().h; }
  Eigen::VectorXd apply(const Eigen::VectorXd& u) const;

 private:
  DomainMask mask_;
  Eigen::SparseMatrix<double> matrix_;
};

LaplaceOperator assemble(const DomainMask& mask);

// Five-point Laplacian of a full-domain vector evaluated at one inside site,
// reading neighbour values across the mask (zero outside).  Used to measure
// harmonicity of fields that do not vanish outside a submask.
double stencil_laplacian(const DomainMask& mask, const Eigen::VectorXd& values, int site);

// Sparse Cholesky factorization of the Dirichlet Laplacian, shared by every
// solve on the same mask.  solve() is const and safe to call concurrently.
class GreenSolver {
 public:
  explicit GreenSolver(LaplaceOperator op);
  GreenSolver(const GreenSolver&) = delete;
  GreenSolver& operator=(const GreenSolver&) = delete;

  const LaplaceOperator& op() const { return op_; }
  const DomainMask& mask() const { return op_.mask(); }

  // Solution of L u = f with verified residual (infinity norm, 1e-10 relative).
  Eigen::VectorXd solve(const Eigen::VectorXd& f) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& f) const;

  // Green kernel g(z, w) = (L^{-1})_{zw} / h^2 for interior sites z, w.
  double green_kernel(int site_z, int site_w) const;
  // Dense Green matrix over interior indices; throws resource-limit beyond
  // kDenseSiteCap sites.  Cached after the first call.
  const Eigen::MatrixXd& green_matrix() const;

 private:
  LaplaceOperator op_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
  mutable std::optional<Eigen::MatrixXd> green_;
  mutable std::mutex green_mutex_;
};

inline Eigen::VectorXd solve_poisson(const GreenSolver& solver, const Eigen::VectorXd& f) {
  return solver.solve(f);
}

// Eigenpairs of the Dirichlet Laplacian, ascending, with eigenvectors
// orthonormal under the cell-area inner product <u, v> = h^2 sum u v.
struct SpectralDecomp {
  DomainMask mask;
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;  // one column per eigenvalue
  bool full = false;
};

// count = -1 requests the full spectrum (dense solve); otherwise the smallest
// `count` eigenpairs are found by deflated inverse iteration.
SpectralDecomp eigendecompose(const LaplaceOperator& op, int count = -1);

// Spectral powers L^{1/2} and L^{-1/2}; require a full decomposition.
Eigen::VectorXd apply_sqrt(const SpectralDecomp& decomp, const Eigen::VectorXd& f);
Eigen::VectorXd apply_inv_sqrt(const SpectralDecomp& decomp, const Eigen::VectorXd& f);

// Discrete Dirichlet energy sum over lattice edges of difference products,
// with zero extension outside the mask.  Equals <L f, g> h^2.
double dirichlet_inner(const DomainMask& mask, const Eigen::VectorXd& f, const Eigen::VectorXd& g);

}  // namespace hgff
