#include "hgff/hadamard.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>

#include "hgff/error.hpp"
#include "hgff/harmonic.hpp"

namespace hgff {

namespace {

// Interior indices of mask cells within the outer mask, in interior order.
std::vector<int> outer_rows(const DomainMask& mask, const DomainMask& outer) {
  std::vector<int> rows(static_cast<size_t>(mask.interior_count()));
  for (int i = 0; i < mask.interior_count(); ++i) {
    int r = outer.interior_index(mask.interior_site(i));
    require(r >= 0, errc::mask_mismatch, "flow masks are not nested");
    rows[static_cast<size_t>(i)] = r;
  }
  return rows;
}

OperatorBlock kernel_block(const FlowWorkspace& ws, int k) {
  OperatorBlock block;
  block.shell = k;
  std::span<const int> shell = ws.flow().shell(k);
  if (shell.empty()) return block;

  const DomainMask& mask = ws.mask(k);
  std::map<int, std::vector<int>> groups;  // boundary index -> shell cells
  for (int site : shell) groups[nearest_boundary_index(mask, site)].push_back(site);

  std::vector<int> distinct;
  distinct.reserve(groups.size());
  for (const auto& [b, sites] : groups) distinct.push_back(b);

  std::span<const double> ds = ws.arclength(k);
  const double h2 = ws.grid().h * ws.grid().h;
  Eigen::MatrixXd cols = ws.measure(k)->kernel_columns(distinct);
  block.weights.resize(static_cast<Eigen::Index>(distinct.size()));
  block.noise_sites.reserve(distinct.size());
  for (size_t j = 0; j < distinct.size(); ++j) {
    auto& sites = groups[distinct[j]];
    cols.col(static_cast<Eigen::Index>(j)) /= ds[static_cast<size_t>(distinct[j])];
    block.weights(static_cast<Eigen::Index>(j)) = static_cast<double>(sites.size()) * h2;
    block.noise_sites.push_back(std::move(sites));
  }
  block.rows = outer_rows(mask, ws.outer_mask());
  block.columns = std::move(cols);
  return block;
}

OperatorBlock exact_block(const FlowWorkspace& ws, int k) {
  OperatorBlock block;
  block.shell = k;
  const DomainMask& mask = ws.mask(k);
  const DomainMask& prev = ws.flow().mask(k - 1);

  // Fresh cells of this step, in interior order of V_k.
  std::vector<int> fresh;
  std::vector<Eigen::Index> fresh_pos;
  for (int i = 0; i < mask.interior_count(); ++i) {
    int site = mask.interior_site(i);
    if (prev.interior_index(site) < 0) {
      fresh.push_back(site);
      fresh_pos.push_back(i);
    }
  }
  if (fresh.empty()) return block;

  auto solver = ws.solver(k);
  const Eigen::Index m = mask.interior_count();
  const Eigen::Index a = static_cast<Eigen::Index>(fresh.size());
  const double h2 = ws.grid().h * ws.grid().h;

  // Green values of V_k on the fresh block; this equals the covariance of the
  // field increment there because the previous Green function vanishes on
  // cells outside V_{k-1}.
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(m, a);
  for (Eigen::Index j = 0; j < a; ++j) rhs(fresh_pos[static_cast<size_t>(j)], j) = 1.0;
  Eigen::MatrixXd sol = solver->solve(rhs) / h2;
  Eigen::MatrixXd head(a, a);
  for (Eigen::Index i = 0; i < a; ++i) head.row(i) = sol.row(fresh_pos[static_cast<size_t>(i)]);
  head = ((head + head.transpose()) / 2.0).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(head);
  require(eig.info() == Eigen::Success, errc::solver_failure,
          "eigendecomposition of the increment covariance failed");
  const double lambda_max = eig.eigenvalues().cwiseAbs().maxCoeff();
  require(eig.eigenvalues()(0) >= -1e-9 * lambda_max, errc::indefinite_increment,
          "increment covariance has a significantly negative eigenvalue at shell " +
              std::to_string(k));

  std::vector<Eigen::Index> kept;
  for (Eigen::Index i = 0; i < a; ++i)
    if (eig.eigenvalues()(i) > 1e-12 * lambda_max) kept.push_back(i);
  const Eigen::Index r = static_cast<Eigen::Index>(kept.size());
  if (r == 0) return block;

  // Harmonic extension of the eigenvectors' exit values back into V_{k-1}
  // (zero there if the previous mask is empty).
  Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(m, r);
  for (Eigen::Index j = 0; j < r; ++j) {
    const auto& vec = eig.eigenvectors().col(kept[static_cast<size_t>(j)]);
    for (Eigen::Index i = 0; i < a; ++i) cols(fresh_pos[static_cast<size_t>(i)], j) = vec(i);
  }
  if (prev.interior_count() > 0) {
    const Grid& grid = ws.grid();
    std::span<const BoundarySite> ring = prev.boundary();
    Eigen::MatrixXd trace = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ring.size()), r);
    for (size_t b = 0; b < ring.size(); ++b) {
      if (!mask.inside(ring[b].i, ring[b].j)) continue;
      Eigen::Index pos = mask.interior_index(grid.site(ring[b].i, ring[b].j));
      for (Eigen::Index j = 0; j < r; ++j)
        trace(static_cast<Eigen::Index>(b), j) = cols(pos, j);
    }
    Eigen::MatrixXd ext = ws.measure(k - 1)->extend(trace);
    for (int i = 0; i < prev.interior_count(); ++i) {
      Eigen::Index pos = mask.interior_index(prev.interior_site(i));
      cols.row(pos) = ext.row(i);
    }
  }

  block.rows = outer_rows(mask, ws.outer_mask());
  block.columns = std::move(cols);
  block.weights.resize(r);
  block.noise_sites.reserve(static_cast<size_t>(r));
  // Noise cells must be fresh and distinct across the whole operator; tie
  // column j to the j-th fresh cell so every shell consumes its own white
  // noise cells in cell order.
  for (Eigen::Index j = 0; j < r; ++j) {
    block.weights(j) = eig.eigenvalues()(kept[static_cast<size_t>(j)]);
    block.noise_sites.push_back({fresh[static_cast<size_t>(j)]});
  }
  return block;
}

}  // namespace

HadamardOperator::HadamardOperator(std::shared_ptr<const FlowWorkspace> ws, OperatorMode mode,
                                   std::vector<OperatorBlock> blocks)
    : ws_(std::move(ws)), mode_(mode), blocks_(std::move(blocks)) {
  rank_prefix_.assign(blocks_.size() + 1, 0);
  for (size_t k = 1; k < blocks_.size(); ++k)
    rank_prefix_[k + 1] = rank_prefix_[k] + blocks_[k].rank();
}

HadamardOperator HadamardOperator::build(std::shared_ptr<const FlowWorkspace> ws,
                                         OperatorMode mode) {
  require(ws != nullptr, errc::invalid_parameter, "null workspace");
  std::vector<OperatorBlock> blocks(static_cast<size_t>(ws->shell_count()) + 1);
  for (int k = 1; k <= ws->shell_count(); ++k)
    blocks[static_cast<size_t>(k)] =
        mode == OperatorMode::kernel ? kernel_block(*ws, k) : exact_block(*ws, k);
  return HadamardOperator(std::move(ws), mode, std::move(blocks));
}

int HadamardOperator::rank_up_to(int k) const {
  require(k >= 0 && k <= block_count(), errc::invalid_parameter, "shell index out of range");
  return rank_prefix_[static_cast<size_t>(k) + 1];
}

Eigen::VectorXd HadamardOperator::apply(double t, const Eigen::VectorXd& f) const {
  const DomainMask& outer = outer_mask();
  require(f.size() == outer.interior_count(), errc::mask_mismatch,
          "apply expects a function on the interior of the final mask");
  int kt = flow().time_index(t);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(outer.interior_count());
  for (int k = 1; k <= kt; ++k) {
    const OperatorBlock& block = blocks_[static_cast<size_t>(k)];
    if (block.rank() == 0) continue;
    Eigen::VectorXd coef(block.rank());
    for (int j = 0; j < block.rank(); ++j) {
      const auto& sites = block.noise_sites[static_cast<size_t>(j)];
      double sum = 0.0;
      for (int site : sites) sum += f(outer.interior_index(site));
      coef(j) = block.weights(j) * sum / static_cast<double>(sites.size());
    }
    Eigen::VectorXd v = block.columns * coef;
    for (size_t rloc = 0; rloc < block.rows.size(); ++rloc)
      out(block.rows[rloc]) += v(static_cast<Eigen::Index>(rloc));
  }
  return out;
}

Eigen::VectorXd HadamardOperator::apply_adjoint(double t, const Eigen::VectorXd& g) const {
  const DomainMask& outer = outer_mask();
  require(g.size() == outer.interior_count(), errc::mask_mismatch,
          "adjoint expects a function on the interior of the final mask");
  int kt = flow().time_index(t);
  const double h2 = flow().grid().h * flow().grid().h;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(total_rank());
  for (int k = 1; k <= kt; ++k) {
    const OperatorBlock& block = blocks_[static_cast<size_t>(k)];
    if (block.rank() == 0) continue;
    Eigen::VectorXd gsub(static_cast<Eigen::Index>(block.rows.size()));
    for (size_t rloc = 0; rloc < block.rows.size(); ++rloc)
      gsub(static_cast<Eigen::Index>(rloc)) = g(block.rows[rloc]);
    out.segment(rank_prefix_[static_cast<size_t>(k)], block.rank()) =
        block.columns.transpose() * gsub * h2;
  }
  return out;
}

Eigen::VectorXd HadamardOperator::apply_columns(double t, const Eigen::VectorXd& coefs) const {
  require(coefs.size() == total_rank(), errc::invalid_parameter,
          "column-coordinate vector has the wrong length");
  int kt = flow().time_index(t);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(outer_mask().interior_count());
  for (int k = 1; k <= kt; ++k) {
    const OperatorBlock& block = blocks_[static_cast<size_t>(k)];
    if (block.rank() == 0) continue;
    Eigen::VectorXd c = coefs.segment(rank_prefix_[static_cast<size_t>(k)], block.rank());
    Eigen::VectorXd v = block.columns * block.weights.cwiseProduct(c);
    for (size_t rloc = 0; rloc < block.rows.size(); ++rloc)
      out(block.rows[rloc]) += v(static_cast<Eigen::Index>(rloc));
  }
  return out;
}

Eigen::VectorXd HadamardOperator::increment_image(double t, double t2,
                                                  const Eigen::VectorXd& f) const {
  int k1 = flow().time_index(t);
  int k2 = flow().time_index(t2);
  require(k1 <= k2, errc::t_order, "increment requires t <= t2");
  return apply(t2, f) - apply(t, f);
}

Eigen::MatrixXd HadamardOperator::gram(double t, double t2) const {
  int kmin = std::min(flow().time_index(t), flow().time_index(t2));
  const DomainMask& mask = flow().mask(kmin);
  const Eigen::Index m = mask.interior_count();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(m, m);
  if (m == 0) return g;

  std::vector<Eigen::Index> rowmap(static_cast<size_t>(outer_mask().interior_count()),
                                   Eigen::Index{-1});
  for (int i = 0; i < mask.interior_count(); ++i)
    rowmap[static_cast<size_t>(outer_mask().interior_index(mask.interior_site(i)))] = i;

  for (int k = 1; k <= kmin; ++k) {
    const OperatorBlock& block = blocks_[static_cast<size_t>(k)];
    if (block.rank() == 0) continue;
    Eigen::MatrixXd sub = Eigen::MatrixXd::Zero(m, block.rank());
    for (size_t rloc = 0; rloc < block.rows.size(); ++rloc)
      sub.row(rowmap[static_cast<size_t>(block.rows[rloc])]) =
          block.columns.row(static_cast<Eigen::Index>(rloc));
    sub *= block.weights.cwiseSqrt().asDiagonal();
    g.selfadjointView<Eigen::Lower>().rankUpdate(sub);
  }
  return g.selfadjointView<Eigen::Lower>();
}

double HadamardOperator::gram_defect(double t, double t2) const {
  int kmin = std::min(flow().time_index(t), flow().time_index(t2));
  if (flow().mask(kmin).interior_count() == 0) return 0.0;
  Eigen::MatrixXd g = gram(t, t2);
  const Eigen::MatrixXd& green = ws_->solver(kmin)->green_matrix();
  return (green - g).norm() / green.norm();
}

double HadamardOperator::min_singular_value(double t) const {
  Eigen::MatrixXd g = gram(t, t);
  if (g.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g, Eigen::EigenvaluesOnly);
  require(eig.info() == Eigen::Success, errc::solver_failure, "eigenvalue computation failed");
  return std::sqrt(std::max(0.0, eig.eigenvalues()(0)));
}

IdentityCheckResult discrete_hadamard_identity_check(const FlowWorkspace& ws, int k) {
  require(k >= 1 && k <= ws.shell_count(), errc::invalid_parameter, "shell index out of range");
  IdentityCheckResult result;
  const DomainMask& prev = ws.mask(k - 1);
  if (prev.interior_count() == 0) return result;
  const DomainMask& mask = ws.mask(k);
  const Grid& grid = ws.grid();

  // Exit cells: boundary ring of V_{k-1} inside V_k.
  std::vector<int> exit_boundary;
  std::vector<Eigen::Index> exit_rows;
  std::span<const BoundarySite> ring = prev.boundary();
  for (size_t b = 0; b < ring.size(); ++b) {
    if (!mask.inside(ring[b].i, ring[b].j)) continue;
    int site = grid.site(ring[b].i, ring[b].j);
    exit_boundary.push_back(static_cast<int>(b));
    exit_rows.push_back(mask.interior_index(site));
    if (ws.flow().shell_index(site) != k) result.exit_sites_outside_shell.push_back(site);
  }

  const Eigen::MatrixXd& gk = ws.solver(k)->green_matrix();
  const Eigen::MatrixXd& gkm = ws.solver(k - 1)->green_matrix();
  const Eigen::Index p = prev.interior_count();
  std::vector<Eigen::Index> pos(static_cast<size_t>(p));
  for (Eigen::Index i = 0; i < p; ++i)
    pos[static_cast<size_t>(i)] = mask.interior_index(prev.interior_site(static_cast<int>(i)));

  Eigen::MatrixXd lhs(p, p);
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < p; ++j)
      lhs(i, j) = gk(pos[static_cast<size_t>(i)], pos[static_cast<size_t>(j)]);
  lhs -= gkm;

  if (!exit_boundary.empty()) {
    Eigen::MatrixXd hm_cols = ws.measure(k - 1)->kernel_columns(exit_boundary);
    Eigen::MatrixXd gsub(static_cast<Eigen::Index>(exit_rows.size()), p);
    for (size_t a = 0; a < exit_rows.size(); ++a)
      for (Eigen::Index j = 0; j < p; ++j)
        gsub(static_cast<Eigen::Index>(a), j) = gk(exit_rows[a], pos[static_cast<size_t>(j)]);
    lhs -= hm_cols * gsub;
  }
  result.defect = lhs.size() > 0 ? lhs.cwiseAbs().maxCoeff() : 0.0;
  return result;
}

}  // namespace hgff
