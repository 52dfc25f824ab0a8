#include "hgff/fields.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "hgff/error.hpp"
#include "hgff/parallel.hpp"
#include "hgff/stats.hpp"

namespace hgff {

namespace {

void require_white_on_outer(const HadamardOperator& op, const FieldSample& white) {
  require(white.kind == FieldKind::white_noise, errc::invalid_parameter,
          "expected a white-noise sample");
  require(white.values.size() == op.outer_mask().interior_count(), errc::mask_mismatch,
          "white noise does not live on the final flow mask");
}

// sum over columns of coefs * sqrt(weight) * nu, over all blocks.
double weighted_noise_pairing(const HadamardOperator& op, const Eigen::VectorXd& coefs,
                              const Eigen::VectorXd& nu) {
  double sum = 0.0;
  for (int k = 1; k <= op.block_count(); ++k) {
    const OperatorBlock& block = op.block(k);
    if (block.rank() == 0) continue;
    const int off = op.rank_up_to(k - 1);
    sum += coefs.segment(off, block.rank())
               .dot(block.weights.cwiseSqrt().cwiseProduct(nu.segment(off, block.rank())));
  }
  return sum;
}

}  // namespace

void validate_skeleton_support(const DomainFlow& flow, std::span<const PointMass> f) {
  auto skeleton = flow.skeleton_sites();
  auto anchors = flow.anchor_sites();
  for (const PointMass& mass : f) {
    bool ok = std::find(skeleton.begin(), skeleton.end(), mass.site) != skeleton.end() ||
              std::find(anchors.begin(), anchors.end(), mass.site) != anchors.end();
    require(ok, errc::support_not_on_skeleton,
            "point mass at cell " + std::to_string(mass.site) + " is not on the skeleton");
  }
}

Eigen::VectorXd noise_coordinates(const HadamardOperator& op, RngSpec rng) {
  NormalStream stream(rng);
  const double h = op.outer_mask().grid().h;
  const double inv_h = 1.0 / h;
  Eigen::VectorXd nu(op.total_rank());
  for (int k = 1; k <= op.block_count(); ++k) {
    const OperatorBlock& block = op.block(k);
    int off = op.rank_up_to(k - 1);
    for (int j = 0; j < block.rank(); ++j) {
      const auto& sites = block.noise_sites[static_cast<size_t>(j)];
      // Mirror the field overload term by term (normal * inv_h is the stored
      // white-noise density value), so the two routes are bit-identical.
      double sum = 0.0;
      for (int site : sites) sum += stream.normal(static_cast<std::uint64_t>(site)) * inv_h;
      nu(off + j) = sum * h / std::sqrt(static_cast<double>(sites.size()));
    }
  }
  return nu;
}

Eigen::VectorXd pairing_curve(const HadamardOperator& op, const Eigen::VectorXd& adjoint_coefs,
                              const Eigen::VectorXd& nu) {
  require(adjoint_coefs.size() == op.total_rank() && nu.size() == op.total_rank(),
          errc::invalid_parameter, "pairing curve needs full column-coordinate vectors");
  Eigen::VectorXd out(op.block_count() + 1);
  out(0) = 0.0;
  for (int k = 1; k <= op.block_count(); ++k) {
    const OperatorBlock& block = op.block(k);
    double step = 0.0;
    if (block.rank() > 0) {
      const int off = op.rank_up_to(k - 1);
      step = adjoint_coefs.segment(off, block.rank())
                 .dot(block.weights.cwiseSqrt().cwiseProduct(nu.segment(off, block.rank())));
    }
    out(k) = out(k - 1) + step;
  }
  return out;
}

FieldSample sample_white_noise(const DomainMask& mask, RngSpec rng) {
  NormalStream stream(rng);
  FieldSample sample;
  sample.kind = FieldKind::white_noise;
  sample.rng = rng;
  sample.values.resize(mask.interior_count());
  const double inv_h = 1.0 / mask.grid().h;
  for (int i = 0; i < mask.interior_count(); ++i)
    sample.values(i) = stream.normal(static_cast<std::uint64_t>(mask.interior_site(i))) * inv_h;
  return sample;
}

Eigen::VectorXd noise_coordinates(const HadamardOperator& op, const FieldSample& white) {
  require_white_on_outer(op, white);
  const DomainMask& outer = op.outer_mask();
  const double h = outer.grid().h;
  Eigen::VectorXd nu(op.total_rank());
  for (int k = 1; k <= op.block_count(); ++k) {
    const OperatorBlock& block = op.block(k);
    int off = op.rank_up_to(k - 1);
    for (int j = 0; j < block.rank(); ++j) {
      const auto& sites = block.noise_sites[static_cast<size_t>(j)];
      double sum = 0.0;
      for (int site : sites) sum += white.values(outer.interior_index(site));
      nu(off + j) = sum * h / std::sqrt(static_cast<double>(sites.size()));
    }
  }
  return nu;
}

FieldSample gff_via_hadamard(const HadamardOperator& op, const FieldSample& white, double t) {
  require_white_on_outer(op, white);
  const int kt = op.flow().time_index(t);
  Eigen::VectorXd nu = noise_coordinates(op, white);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(op.outer_mask().interior_count());
  for (int k = 1; k <= kt; ++k) {
    const OperatorBlock& block = op.block(k);
    if (block.rank() == 0) continue;
    const int off = op.rank_up_to(k - 1);
    Eigen::VectorXd v =
        block.columns * block.weights.cwiseSqrt().cwiseProduct(nu.segment(off, block.rank()));
    for (size_t r = 0; r < block.rows.size(); ++r)
      out(block.rows[r]) += v(static_cast<Eigen::Index>(r));
  }
  FieldSample sample;
  sample.kind = FieldKind::gff;
  sample.values = std::move(out);
  sample.time_index = kt;
  sample.rng = white.rng;
  return sample;
}

FieldSample gff_via_spectral(const SpectralDecomp& decomp, RngSpec rng) {
  require(decomp.full, errc::incomplete_spectrum,
          "spectral sampler needs the full eigendecomposition");
  NormalStream stream(rng);
  const Eigen::Index m = decomp.eigenvalues.size();
  Eigen::VectorXd coefs(m);
  for (Eigen::Index i = 0; i < m; ++i)
    coefs(i) = stream.normal(static_cast<std::uint64_t>(i)) / std::sqrt(decomp.eigenvalues(i));
  FieldSample sample;
  sample.kind = FieldKind::gff;
  sample.values = decomp.eigenvectors * coefs;
  sample.time_index = -1;
  sample.rng = rng;
  return sample;
}

Trajectory trajectory(const HadamardOperator& op, const FieldSample& white) {
  require_white_on_outer(op, white);
  Eigen::VectorXd nu = noise_coordinates(op, white);
  const int m = op.outer_mask().interior_count();
  Trajectory traj;
  traj.rng = white.rng;
  traj.fields = Eigen::MatrixXd::Zero(m, op.block_count() + 1);
  Eigen::VectorXd current = Eigen::VectorXd::Zero(m);
  for (int k = 1; k <= op.block_count(); ++k) {
    const OperatorBlock& block = op.block(k);
    if (block.rank() > 0) {
      const int off = op.rank_up_to(k - 1);
      Eigen::VectorXd v =
          block.columns * block.weights.cwiseSqrt().cwiseProduct(nu.segment(off, block.rank()));
      for (size_t r = 0; r < block.rows.size(); ++r)
        current(block.rows[r]) += v(static_cast<Eigen::Index>(r));
    }
    traj.fields.col(k) = current;
  }
  return traj;
}

double pair_field(const DomainMask& mask, const Eigen::VectorXd& f, const Eigen::VectorXd& v) {
  require(f.size() == mask.interior_count() && v.size() == mask.interior_count(),
          errc::mask_mismatch, "pairing operands do not live on the mask");
  return mask.grid().h * mask.grid().h * f.dot(v);
}

Eigen::VectorXd pairing_curve(const HadamardOperator& op, const Eigen::VectorXd& f,
                              const FieldSample& white) {
  Eigen::VectorXd coefs = op.apply_adjoint(1.0, f);
  Eigen::VectorXd nu = noise_coordinates(op, white);
  return pairing_curve(op, coefs, nu);
}

std::vector<double> increment_rate_curve(const HadamardOperator& op, const Eigen::VectorXd& f,
                                         const Eigen::VectorXd& g) {
  Eigen::VectorXd cf = op.apply_adjoint(1.0, f);
  Eigen::VectorXd cg = op.apply_adjoint(1.0, g);
  std::vector<double> rate(static_cast<size_t>(op.block_count()) + 1, 0.0);
  for (int k = 1; k <= op.block_count(); ++k) {
    const OperatorBlock& block = op.block(k);
    if (block.rank() == 0) continue;
    const int off = op.rank_up_to(k - 1);
    double cov = cf.segment(off, block.rank())
                     .dot(block.weights.cwiseProduct(cg.segment(off, block.rank())));
    rate[static_cast<size_t>(k)] = cov / op.flow().delta_tau(k);
  }
  return rate;
}

BoundaryNoiseSample sample_boundary_noise(const FlowWorkspace& ws, double t, RngSpec rng) {
  const int kt = ws.flow().time_index(t);
  const DomainMask& mask = ws.mask(kt);
  BoundaryNoiseSample sample;
  sample.time_index = kt;
  sample.rng = rng;
  sample.values.resize(mask.boundary_count());
  if (mask.boundary_count() == 0) return sample;

  std::span<const double> ds = ws.arclength(kt);
  std::span<const double> rho = ws.rho_profile(kt);
  NormalStream stream(rng);
  const int n = ws.grid().n;
  std::span<const BoundarySite> ring = mask.boundary();
  for (int b = 0; b < mask.boundary_count(); ++b) {
    // Key normals by padded lattice coordinate so the draw does not depend on
    // the enumeration of the ring.
    auto key = static_cast<std::uint64_t>((ring[static_cast<size_t>(b)].j + 1) * (n + 2) +
                                          ring[static_cast<size_t>(b)].i + 1);
    sample.values(b) = stream.normal(key) * std::sqrt(rho[static_cast<size_t>(b)] /
                                                      ds[static_cast<size_t>(b)]);
  }
  return sample;
}

Eigen::VectorXd extend_boundary_noise(const FlowWorkspace& ws, const BoundaryNoiseSample& noise) {
  require(noise.time_index >= 0 && noise.time_index <= ws.shell_count(), errc::invalid_parameter,
          "boundary noise carries an invalid time index");
  return ws.measure(noise.time_index)->extend(noise.values);
}

BoundaryAverage boundary_average(const HadamardOperator& op, const FieldSample& white, double t,
                                 std::span<const PointMass> f) {
  require_white_on_outer(op, white);
  const FlowWorkspace& ws = op.workspace();
  validate_skeleton_support(ws.flow(), f);
  const int kt = ws.flow().time_index(t);
  const DomainMask& outer = op.outer_mask();
  Eigen::VectorXd fvec = point_mass_vector(outer, f);

  BoundaryAverage result;

  // Noise route: tail of the column-coordinate pairing beyond t.
  Eigen::VectorXd coefs = op.apply_adjoint(1.0, fvec) - op.apply_adjoint(t, fvec);
  result.noise_route = weighted_noise_pairing(op, coefs, noise_coordinates(op, white));

  // Boundary route: trace of the final field on the ring of V_t against the
  // sweep of f.
  const DomainMask& mask = ws.mask(kt);
  if (mask.interior_count() > 0) {
    FieldSample psi = gff_via_hadamard(op, white, 1.0);
    std::span<const double> ds = ws.arclength(kt);
    BoundaryFunction swept =
        ws.measure(kt)->sweep(restrict_interior(outer, mask, fvec), ds);
    const Grid& grid = ws.grid();
    std::span<const BoundarySite> ring = mask.boundary();
    double sum = 0.0;
    for (size_t b = 0; b < ring.size(); ++b) {
      if (!grid.contains(ring[b].i, ring[b].j)) continue;
      int idx = outer.interior_index(grid.site(ring[b].i, ring[b].j));
      if (idx < 0) continue;
      sum += psi.values(idx) * swept.values[b] * ds[b];
    }
    result.boundary_route = sum;
  }
  return result;
}

double boundary_average_cov(const FlowWorkspace& ws, std::span<const PointMass> f,
                            std::span<const PointMass> g, double t, double t2) {
  validate_skeleton_support(ws.flow(), f);
  validate_skeleton_support(ws.flow(), g);
  const int kmax = std::max(ws.flow().time_index(t), ws.flow().time_index(t2));
  const DomainMask& outer = ws.outer_mask();
  Eigen::VectorXd fvec = point_mass_vector(outer, f);
  Eigen::VectorXd gvec = point_mass_vector(outer, g);
  double sum = 0.0;
  for (int k = kmax + 1; k <= ws.shell_count(); ++k)
    sum += ws.kappa_cross(k, fvec, gvec) * ws.flow().delta_tau(k);
  return sum;
}

TimeChangeReport time_change_check(const HadamardOperator& op, const Eigen::VectorXd& f,
                                   int samples, RngSpec base, int threads) {
  require(samples >= 2, errc::invalid_parameter, "need at least two samples");
  const FlowWorkspace& ws = op.workspace();
  const int m = op.block_count();
  Eigen::VectorXd coefs = op.apply_adjoint(1.0, f);

  // Probes: the pairing at every positive grid time, then the increments over
  // a partition of [0, 1] into four windows.
  const bool windows = m >= 4;
  const std::array<int, 5> cut = {0, m / 4, m / 2, 3 * m / 4, m};
  const int probe_count = m + (windows ? 4 : 0);

  CovAccumulator acc =
      accumulate_ensemble(samples, threads, probe_count, [&](int s, Eigen::VectorXd& probes) {
        RngSpec rng{base.seed, base.stream + static_cast<std::uint64_t>(s)};
        Eigen::VectorXd curve = pairing_curve(op, coefs, noise_coordinates(op, rng));
        probes.head(m) = curve.tail(m);
        if (windows)
          for (int w = 0; w < 4; ++w)
            probes(m + w) =
                curve(cut[static_cast<size_t>(w) + 1]) - curve(cut[static_cast<size_t>(w)]);
      });

  MomentReport report = acc.report();
  TimeChangeReport out;
  out.sample_count = report.count;
  out.times.resize(static_cast<size_t>(m));
  out.empirical_var.resize(static_cast<size_t>(m));
  out.quadrature.resize(static_cast<size_t>(m));
  out.ratio.resize(static_cast<size_t>(m));
  std::vector<double> kappa = ws.kappa_curve(f);
  double integral = 0.0;
  for (int k = 1; k <= m; ++k) {
    integral += kappa[static_cast<size_t>(k)] * ws.flow().delta_tau(k);
    out.times[static_cast<size_t>(k - 1)] = ws.flow().time_point(k);
    out.empirical_var[static_cast<size_t>(k - 1)] = report.variance(k - 1);
    out.quadrature[static_cast<size_t>(k - 1)] = integral;
    out.ratio[static_cast<size_t>(k - 1)] = integral > 0.0 ? report.variance(k - 1) / integral : 0.0;
  }
  if (windows) {
    for (int a = 0; a < 4; ++a)
      for (int b = a + 1; b < 4; ++b) {
        if (cut[static_cast<size_t>(a)] == cut[static_cast<size_t>(a) + 1] ||
            cut[static_cast<size_t>(b)] == cut[static_cast<size_t>(b) + 1])
          continue;
        out.increment_z.push_back(acc.independence_z(m + a, m + b));
      }
  }
  return out;
}

}  // namespace hgff
