#include "hgff/workspace.hpp"

#include <utility>

namespace hgff {

FlowWorkspace::FlowWorkspace(DomainFlow flow)
    : flow_(std::move(flow)), slots_(static_cast<size_t>(flow_.shell_count()) + 1) {}

FlowWorkspace::Slot& FlowWorkspace::slot(int k) const {
  require(k >= 0 && k <= flow_.shell_count(), errc::invalid_parameter,
          "shell index " + std::to_string(k) + " out of range");
  return slots_[static_cast<size_t>(k)];
}

std::shared_ptr<const GreenSolver> FlowWorkspace::solver(int k) const {
  std::scoped_lock lock(mutex_);
  Slot& s = slot(k);
  if (!s.solver) s.solver = std::make_shared<GreenSolver>(assemble(flow_.mask(k)));
  return s.solver;
}

std::shared_ptr<const HarmonicMeasure> FlowWorkspace::measure(int k) const {
  std::scoped_lock lock(mutex_);
  Slot& s = slot(k);
  if (!s.solver) s.solver = std::make_shared<GreenSolver>(assemble(flow_.mask(k)));
  if (!s.measure) s.measure = std::make_shared<HarmonicMeasure>(s.solver);
  return s.measure;
}

std::span<const double> FlowWorkspace::arclength(int k) const {
  std::scoped_lock lock(mutex_);
  Slot& s = slot(k);
  if (!s.arclength) s.arclength = std::make_shared<std::vector<double>>(flow_.boundary_arclength(k));
  return *s.arclength;
}

std::span<const double> FlowWorkspace::rho_profile(int k) const {
  std::scoped_lock lock(mutex_);
  Slot& s = slot(k);
  if (!s.rho) s.rho = std::make_shared<std::vector<double>>(flow_.boundary_rho_profile(k));
  return *s.rho;
}

double FlowWorkspace::kappa(int k, const Eigen::VectorXd& f_outer) const {
  if (flow_.mask(k).interior_count() == 0) return 0.0;
  return kappa_at(flow_, *measure(k), k, f_outer, arclength(k), rho_profile(k));
}

double FlowWorkspace::kappa_cross(int k, const Eigen::VectorXd& f_outer,
                                  const Eigen::VectorXd& g_outer) const {
  const DomainMask& mk = flow_.mask(k);
  if (mk.interior_count() == 0) return 0.0;
  const DomainMask& outer = outer_mask();
  const auto hm = measure(k);
  const auto ds = arclength(k);
  const auto rho = rho_profile(k);
  const BoundaryFunction sf = hm->sweep(restrict_interior(outer, mk, f_outer), ds);
  const BoundaryFunction sg = hm->sweep(restrict_interior(outer, mk, g_outer), ds);
  double sum = 0.0;
  for (int b = 0; b < mk.boundary_count(); ++b)
    sum += sf.values[static_cast<size_t>(b)] * sg.values[static_cast<size_t>(b)] *
           rho[static_cast<size_t>(b)] * ds[static_cast<size_t>(b)];
  return sum;
}

std::vector<double> FlowWorkspace::kappa_curve(const Eigen::VectorXd& f_outer) const {
  std::vector<double> out(static_cast<size_t>(flow_.shell_count()) + 1, 0.0);
  for (int k = 1; k <= flow_.shell_count(); ++k) out[static_cast<size_t>(k)] = kappa(k, f_outer);
  return out;
}

Eigen::VectorXd FlowWorkspace::modified_green_potential(std::span<const PointMass> f, double t) const {
  const int k = flow_.time_index(t);
  const HarmonicMeasure* inner = nullptr;
  std::shared_ptr<const HarmonicMeasure> keep;
  if (flow_.mask(k).interior_count() > 0) {
    keep = measure(k);
    inner = keep.get();
  }
  return hgff::modified_green_potential(flow_, *solver(flow_.shell_count()), inner, f, k);
}

}  // namespace hgff
