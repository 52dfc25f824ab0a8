#pragma once

#include <Eigen/Dense>
#include <memory>
#include <span>
#include <vector>

#include "hgff/workspace.hpp"

namespace hgff {

enum class OperatorMode { kernel, exact };

// One shell block of the operator.  Columns are stored compactly on the
// interior of V_k (`rows` maps local rows to interior indices of V_M) and
// vanish outside it.  Each column carries a nonnegative weight and the list
// of white-noise cells that feed its noise coordinate:
//   kernel mode: one stored column per boundary cell the shell snaps to,
//     weight m_b h^2 (m_b = cells snapped), noise cells = those shell cells;
//   exact mode: one column per retained eigenvector of the Green increment,
//     weight = eigenvalue, noise cell = one fresh cell of V_k \ V_{k-1}.
struct OperatorBlock {
  int shell = 0;
  std::vector<int> rows;
  Eigen::MatrixXd columns;
  Eigen::VectorXd weights;
  std::vector<std::vector<int>> noise_sites;

  int rank() const { return static_cast<int>(columns.cols()); }
};

// Shell-block factorization of the covariance flow: Q_t has the blocks of
// shells 1..k(t), and the weighted outer product over blocks up to t ^ t'
// reproduces the Green kernel of V_{t ^ t'} (exactly in exact mode, up to a
// refinement-consistent defect in kernel mode).
class HadamardOperator {
 public:
  static HadamardOperator build(std::shared_ptr<const FlowWorkspace> ws, OperatorMode mode);

  OperatorMode mode() const { return mode_; }
  const FlowWorkspace& workspace() const { return *ws_; }
  const DomainFlow& flow() const { return ws_->flow(); }
  const DomainMask& outer_mask() const { return ws_->outer_mask(); }

  int block_count() const { return static_cast<int>(blocks_.size()) - 1; }
  const OperatorBlock& block(int k) const { return blocks_[static_cast<size_t>(k)]; }
  // Number of columns in blocks 1..k.
  int rank_up_to(int k) const;
  int total_rank() const { return rank_up_to(block_count()); }

  // Q_t f for f on the interior of V_M, reading f through the column
  // coordinates (mean over each column's noise cells, weighted).
  Eigen::VectorXd apply(double t, const Eigen::VectorXd& f) const;
  // Adjoint into column coordinates: (Q_t* g)_i = <column_i, g> h^2, zero for
  // columns beyond t.  Indexed over all columns of the operator.
  Eigen::VectorXd apply_adjoint(double t, const Eigen::VectorXd& g) const;
  // Q_t W applied to a full column-coordinate vector.
  Eigen::VectorXd apply_columns(double t, const Eigen::VectorXd& coefs) const;
  // (Q_{t2} - Q_t) f; harmonic inside V_t and equal to Q_{t2} f outside.
  Eigen::VectorXd increment_image(double t, double t2, const Eigen::VectorXd& f) const;

  // Weighted outer product over blocks up to t ^ t2, on interior(V_{t ^ t2}).
  Eigen::MatrixXd gram(double t, double t2) const;
  // Relative Frobenius distance of gram(t, t2) from the Green matrix of
  // V_{t ^ t2} (0 for an empty mask).
  double gram_defect(double t, double t2) const;
  // Smallest singular value of the weighted column map restricted to blocks
  // up to t (square root of the smallest Gram eigenvalue).
  double min_singular_value(double t) const;

 private:
  HadamardOperator(std::shared_ptr<const FlowWorkspace> ws, OperatorMode mode,
                   std::vector<OperatorBlock> blocks);

  std::shared_ptr<const FlowWorkspace> ws_;
  OperatorMode mode_ = OperatorMode::exact;
  std::vector<OperatorBlock> blocks_;  // index 0 unused
  std::vector<int> rank_prefix_;
};

// Lattice analogue of the boundary-sweep identity behind the operator: for
// z, w interior to V_{k-1},
//   G_k(z, w) - G_{k-1}(z, w) = sum_a hm_{k-1}(z, a) G_k(a, w)
// over the exit cells a of V_{k-1} (cells of the boundary ring inside V_k;
// terms vanish for cells outside V_k).  Exact for nested masks by the strong
// Markov property of the walk.  The diagnostic lists exit cells that are not
// shell-k cells (identity still exact; flags unusually thick steps).
struct IdentityCheckResult {
  double defect = 0.0;
  std::vector<int> exit_sites_outside_shell;
};

IdentityCheckResult discrete_hadamard_identity_check(const FlowWorkspace& ws, int k);

}  // namespace hgff
