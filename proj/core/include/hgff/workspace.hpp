#pragma once

#include <Eigen/Dense>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "hgff/dirichlet.hpp"
#include "hgff/flow.hpp"
#include "hgff/harmonic.hpp"

namespace hgff {

// Shared per-mask machinery of one flow: Dirichlet factorizations, harmonic
// measures, and the flow-context boundary data (effective arclength, boundary
// speed), each built on first use and cached.  Thread-safe; the cached
// objects are immutable.
class FlowWorkspace {
 public:
  explicit FlowWorkspace(DomainFlow flow);

  const DomainFlow& flow() const { return flow_; }
  const Grid& grid() const { return flow_.grid(); }
  int shell_count() const { return flow_.shell_count(); }
  const DomainMask& mask(int k) const { return flow_.mask(k); }
  const DomainMask& outer_mask() const { return flow_.mask(flow_.shell_count()); }

  // Factorization / harmonic measure of mask V_k (throws empty-domain for an
  // empty mask).
  std::shared_ptr<const GreenSolver> solver(int k) const;
  std::shared_ptr<const HarmonicMeasure> measure(int k) const;

  // Flow-effective arclength and boundary speed per boundary cell of V_k.
  std::span<const double> arclength(int k) const;
  std::span<const double> rho_profile(int k) const;

  // Variance rate kappa(t_k) for f on the interior of V_M (0 on empty masks).
  double kappa(int k, const Eigen::VectorXd& f_outer) const;
  // Cross rate sum_a (sweep_k f)(a)(sweep_k g)(a) rho(a) ds(a).
  double kappa_cross(int k, const Eigen::VectorXd& f_outer, const Eigen::VectorXd& g_outer) const;
  // kappa at every grid time 1..M (index 0 holds 0).
  std::vector<double> kappa_curve(const Eigen::VectorXd& f_outer) const;

  // Modified Green potential at grid time t (see harmonic module).
  Eigen::VectorXd modified_green_potential(std::span<const PointMass> f, double t) const;

 private:
  struct Slot {
    std::shared_ptr<const GreenSolver> solver;
    std::shared_ptr<const HarmonicMeasure> measure;
    std::shared_ptr<const std::vector<double>> arclength;
    std::shared_ptr<const std::vector<double>> rho;
  };

  Slot& slot(int k) const;

  DomainFlow flow_;
  mutable std::mutex mutex_;
  mutable std::vector<Slot> slots_;
};

}  // namespace hgff
