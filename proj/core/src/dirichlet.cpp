#include "hgff/dirichlet.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <mutex>

#include "hgff/parallel.hpp"
#include "hgff/rng.hpp"

namespace hgff {
namespace {

constexpr int kNbr = 4;
constexpr int kDi[kNbr] = {1, -1, 0, 0};
constexpr int kDj[kNbr] = {0, 0, 1, -1};

}  // namespace

LaplaceOperator::LaplaceOperator(DomainMask mask) : mask_(std::move(mask)) {
  const int m = mask_.interior_count();
  require(m > 0, errc::empty_domain, "cannot assemble the Laplacian of an empty mask");
  const Grid& g = mask_.grid();
  const double w = 1.0 / (g.h * g.h);

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<size_t>(m) * 5);
  for (int k = 0; k < m; ++k) {
    const auto [i, j] = g.coords(mask_.interior_site(k));
    trips.emplace_back(k, k, 4.0 * w);
    for (int d = 0; d < kNbr; ++d) {
      const int ni = i + kDi[d], nj = j + kDj[d];
      if (!mask_.inside(ni, nj)) continue;
      trips.emplace_back(k, mask_.interior_index(g.site(ni, nj)), -w);
    }
  }
  matrix_.resize(m, m);
  matrix_.setFromTriplets(trips.begin(), trips.end());
  matrix_.makeCompressed();
}

Eigen::VectorXd LaplaceOperator::apply(const Eigen::VectorXd& u) const {
  require(u.size() == mask_.interior_count(), errc::invalid_parameter,
          "vector length does not match interior site count");
  return matrix_ * u;
}

LaplaceOperator assemble(const DomainMask& mask) { return LaplaceOperator(mask); }

double stencil_laplacian(const DomainMask& mask, const Eigen::VectorXd& values, int site) {
  require(values.size() == mask.interior_count(), errc::invalid_parameter,
          "vector length does not match interior site count");
  const Grid& g = mask.grid();
  const int idx = mask.interior_index(site);
  require(idx >= 0, errc::outside_domain, "stencil site is not inside the mask");
  const auto [i, j] = g.coords(site);
  double acc = 4.0 * values(idx);
  for (int d = 0; d < kNbr; ++d) {
    const int ni = i + kDi[d], nj = j + kDj[d];
    if (!mask.inside(ni, nj)) continue;
    acc -= values(mask.interior_index(g.site(ni, nj)));
  }
  return acc / (g.h * g.h);
}

GreenSolver::GreenSolver(LaplaceOperator op) : op_(std::move(op)) {
  ldlt_.compute(op_.matrix());
  require(ldlt_.info() == Eigen::Success, errc::solver_failure,
          "sparse Cholesky factorization of the Dirichlet Laplacian failed");
}

Eigen::VectorXd GreenSolver::solve(const Eigen::VectorXd& f) const {
  require(f.size() == mask().interior_count(), errc::invalid_parameter,
          "right-hand side length does not match interior site count");
  Eigen::VectorXd u = ldlt_.solve(f);
  const double scale = f.cwiseAbs().maxCoeff();
  if (scale == 0.0) return Eigen::VectorXd::Zero(f.size());
  double res = (op_.matrix() * u - f).cwiseAbs().maxCoeff();
  if (res > 1e-10 * scale) {
    u += ldlt_.solve(f - op_.matrix() * u);  // one refinement pass
    res = (op_.matrix() * u - f).cwiseAbs().maxCoeff();
  }
  require(res <= 1e-10 * scale, errc::solver_failure,
          "Poisson solve residual " + std::to_string(res / scale) + " exceeds tolerance");
  return u;
}

Eigen::MatrixXd GreenSolver::solve(const Eigen::MatrixXd& f) const {
  require(f.rows() == mask().interior_count(), errc::invalid_parameter,
          "right-hand side rows do not match interior site count");
  Eigen::MatrixXd u = ldlt_.solve(f);
  const double scale = f.cwiseAbs().maxCoeff();
  if (scale == 0.0) return Eigen::MatrixXd::Zero(f.rows(), f.cols());
  double res = (op_.matrix() * u - f).cwiseAbs().maxCoeff();
  if (res > 1e-10 * scale) {
    u += ldlt_.solve(f - op_.matrix() * u);
    res = (op_.matrix() * u - f).cwiseAbs().maxCoeff();
  }
  require(res <= 1e-10 * scale, errc::solver_failure,
          "batched Poisson solve residual exceeds tolerance");
  return u;
}

double GreenSolver::green_kernel(int site_z, int site_w) const {
  const int iz = mask().interior_index(site_z), iw = mask().interior_index(site_w);
  require(iz >= 0 && iw >= 0, errc::outside_domain, "Green kernel arguments must be interior sites");
  {
    std::lock_guard<std::mutex> lock(green_mutex_);
    if (green_) return (*green_)(iz, iw);
  }
  const double h = op_.h();
  Eigen::VectorXd e = Eigen::VectorXd::Zero(mask().interior_count());
  e(iw) = 1.0;
  return solve(e)(iz) / (h * h);
}

const Eigen::MatrixXd& GreenSolver::green_matrix() const {
  std::lock_guard<std::mutex> lock(green_mutex_);
  if (green_) return *green_;
  const int m = mask().interior_count();
  require(m <= kDenseSiteCap, errc::resource_limit,
          "dense Green matrix request for " + std::to_string(m) + " sites exceeds the cap of " +
              std::to_string(kDenseSiteCap));
  const double inv_h2 = 1.0 / (op_.h() * op_.h());
  Eigen::MatrixXd g(m, m);
  const int block = 512;
  for (int c0 = 0; c0 < m; c0 += block) {
    const int cols = std::min(block, m - c0);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(m, cols);
    for (int c = 0; c < cols; ++c) rhs(c0 + c, c) = 1.0;
    g.middleCols(c0, cols) = ldlt_.solve(rhs) * inv_h2;
  }
  green_ = std::move(g);
  return *green_;
}

namespace {

// Deflated inverse iteration for the lowest eigenpairs.
SpectralDecomp partial_spectrum(const LaplaceOperator& op, int count) {
  const int m = op.mask().interior_count();
  const double h2 = op.h() * op.h();
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(op.matrix());
  require(ldlt.info() == Eigen::Success, errc::solver_failure, "factorization failed in eigensolver");

  SpectralDecomp out;
  out.mask = op.mask();
  out.full = (count == m);
  out.eigenvalues.resize(count);
  out.eigenvectors.resize(m, count);

  NormalStream start({0x5eedULL, 0});
  for (int idx = 0; idx < count; ++idx) {
    Eigen::VectorXd v(m);
    for (int r = 0; r < m; ++r)
      v(r) = start.normal(static_cast<std::uint64_t>(idx) * static_cast<std::uint64_t>(m) + r);
    double lambda = 0.0;
    bool converged = false;
    for (int iter = 0; iter < 1000; ++iter) {
      for (int p = 0; p < idx; ++p)
        v -= (h2 * out.eigenvectors.col(p).dot(v)) * out.eigenvectors.col(p);
      const double norm = std::sqrt(h2 * v.squaredNorm());
      require(norm > 0.0, errc::convergence_failure, "inverse iteration collapsed to zero");
      v /= norm;
      const Eigen::VectorXd lv = op.matrix() * v;
      const double rayleigh = h2 * v.dot(lv);
      if (iter > 0 && std::abs(rayleigh - lambda) <= 1e-13 * rayleigh &&
          std::sqrt(h2) * (lv - rayleigh * v).norm() <= 1e-9 * rayleigh) {
        lambda = rayleigh;
        converged = true;
        break;
      }
      lambda = rayleigh;
      v = ldlt.solve(v);
    }
    require(converged, errc::convergence_failure,
            "inverse iteration failed to converge for eigenpair " + std::to_string(idx));
    out.eigenvalues(idx) = lambda;
    out.eigenvectors.col(idx) = v;
  }
  return out;
}

}  // namespace

SpectralDecomp eigendecompose(const LaplaceOperator& op, int count) {
  const int m = op.mask().interior_count();
  if (count < 0) count = m;
  require(count >= 1 && count <= m, errc::invalid_parameter,
          "eigenpair count must lie in [1, interior site count]");

  if (count < m) return partial_spectrum(op, count);

  require(m <= kDenseSiteCap, errc::resource_limit,
          "full spectrum request for " + std::to_string(m) + " sites exceeds the cap");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(op.matrix()));
  require(es.info() == Eigen::Success, errc::convergence_failure, "dense eigensolver failed");
  SpectralDecomp out;
  out.mask = op.mask();
  out.full = true;
  out.eigenvalues = es.eigenvalues();
  // Euclidean-orthonormal columns rescaled to the cell-area inner product.
  out.eigenvectors = es.eigenvectors() / op.h();
  return out;
}

namespace {

Eigen::VectorXd spectral_power(const SpectralDecomp& d, const Eigen::VectorXd& f, double power) {
  require(d.full, errc::incomplete_spectrum, "spectral powers need the full decomposition");
  require(f.size() == d.eigenvectors.rows(), errc::invalid_parameter,
          "vector length does not match the decomposition");
  const double h2 = d.mask.grid().h * d.mask.grid().h;
  const Eigen::VectorXd coeff = h2 * (d.eigenvectors.transpose() * f);
  return d.eigenvectors * coeff.cwiseProduct(d.eigenvalues.array().pow(power).matrix());
}

}  // namespace

Eigen::VectorXd apply_sqrt(const SpectralDecomp& d, const Eigen::VectorXd& f) {
  return spectral_power(d, f, 0.5);
}

Eigen::VectorXd apply_inv_sqrt(const SpectralDecomp& d, const Eigen::VectorXd& f) {
  return spectral_power(d, f, -0.5);
}

double dirichlet_inner(const DomainMask& mask, const Eigen::VectorXd& f, const Eigen::VectorXd& g) {
  const int m = mask.interior_count();
  require(f.size() == m && g.size() == m, errc::invalid_parameter,
          "vector length does not match interior site count");
  const Grid& gr = mask.grid();
  double acc = 0.0;
  for (int k = 0; k < m; ++k) {
    const int s = mask.interior_site(k);
    const auto [i, j] = gr.coords(s);
    // Forward edges once each; edges into the complement from either side are
    // charged to the inside endpoint (zero extension).
    for (int d = 0; d < kNbr; ++d) {
      const int ni = i + kDi[d], nj = j + kDj[d];
      const bool forward = (d == 0 || d == 2);
      if (mask.inside(ni, nj)) {
        if (!forward) continue;  // interior edge counted from its low end
        const int nk = mask.interior_index(gr.site(ni, nj));
        acc += (f(nk) - f(k)) * (g(nk) - g(k));
      } else {
        acc += f(k) * g(k);
      }
    }
  }
  return acc;
}

}  // namespace hgff
