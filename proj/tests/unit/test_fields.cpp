#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "hgff/checks.hpp"
#include "hgff/error.hpp"
#include "hgff/fields.hpp"
#include "hgff/stats.hpp"

using namespace hgff;

namespace {

std::shared_ptr<FlowWorkspace> disk_workspace(int n, int shells) {
  Grid grid = build_grid_box(n, 4.0 / 3.0);
  return std::make_shared<FlowWorkspace>(build_flow(grid, DiskFlow{{0.0, 0.0}, 1.0}, shells));
}

Eigen::VectorXd random_vector(int size, std::uint64_t stream) {
  NormalStream s({217, stream});
  Eigen::VectorXd v(size);
  for (int i = 0; i < size; ++i) v(i) = s.normal(static_cast<std::uint64_t>(i));
  return v;
}

double five_point_residual(const DomainMask& mask, const DomainMask& outer,
                           const Eigen::VectorXd& v) {
  const Grid& grid = outer.grid();
  double res = 0.0, scale = 0.0;
  for (int k = 0; k < mask.interior_count(); ++k) {
    const int site = mask.interior_site(k);
    scale = std::max(scale, std::abs(v(outer.interior_index(site))));
    auto [i, j] = grid.coords(site);
    if (!(mask.inside(i + 1, j) && mask.inside(i - 1, j) && mask.inside(i, j + 1) &&
          mask.inside(i, j - 1)))
      continue;
    double sum = 4.0 * v(outer.interior_index(site));
    sum -= v(outer.interior_index(grid.site(i + 1, j)));
    sum -= v(outer.interior_index(grid.site(i - 1, j)));
    sum -= v(outer.interior_index(grid.site(i, j + 1)));
    sum -= v(outer.interior_index(grid.site(i, j - 1)));
    res = std::max(res, std::abs(sum));
  }
  return scale > 0.0 ? res / (4.0 * scale) : res;
}

}  // namespace

TEST_SUITE_BEGIN("fields");

TEST_CASE("white noise is keyed by cell and carries density variance") {
  auto ws = disk_workspace(24, 8);
  const DomainMask& outer = ws->outer_mask();
  const double h2 = outer.grid().h * outer.grid().h;

  FieldSample a = sample_white_noise(outer, {5, 0});
  FieldSample b = sample_white_noise(outer, {5, 0});
  CHECK(a.values == b.values);
  CHECK(a.kind == FieldKind::white_noise);

  // Restriction: the same keyed field observed through a submask.
  const DomainMask& sub = ws->mask(4);
  FieldSample small = sample_white_noise(sub, {5, 0});
  for (int i = 0; i < sub.interior_count(); ++i)
    CHECK(small.values(i) == a.values(outer.interior_index(sub.interior_site(i))));

  // Var <f, phi> = h^2 sum f^2 for the cell-density pairing.
  Eigen::VectorXd f = random_vector(outer.interior_count(), 1);
  const int draws = 20000;
  CovAccumulator acc(1);
  Eigen::VectorXd probe(1);
  for (int s = 0; s < draws; ++s) {
    FieldSample w = sample_white_noise(outer, {99, static_cast<std::uint64_t>(s)});
    probe(0) = pair_field(outer, f, w.values);
    acc.accumulate(probe);
  }
  MomentReport rep = acc.report();
  const double expect = h2 * f.squaredNorm();
  CHECK(std::abs(rep.variance(0) - expect) <=
        check_threshold("variance_se") * rep.se_variance(0));
  CHECK(std::abs(rep.mean(0)) <= check_threshold("mean_se") * rep.se_mean(0));
}

TEST_CASE("noise coordinates from field and from stream are bit-identical") {
  auto ws = disk_workspace(24, 8);
  HadamardOperator op = HadamardOperator::build(ws, OperatorMode::exact);
  RngSpec rng{31, 14};
  FieldSample white = sample_white_noise(ws->outer_mask(), rng);
  Eigen::VectorXd via_field = noise_coordinates(op, white);
  Eigen::VectorXd via_stream = noise_coordinates(op, rng);
  CHECK(via_field == via_stream);
  CHECK(via_field.size() == op.total_rank());

  FieldSample wrong = sample_white_noise(ws->mask(4), rng);
  CHECK_THROWS_AS(noise_coordinates(op, wrong), Error);
  try {
    noise_coordinates(op, wrong);
  } catch (const Error& e) {
    CHECK(e.code() == errc::mask_mismatch);
  }
}

TEST_CASE("sampled fields live on the right domain and decompose Markov-wise") {
  auto ws = disk_workspace(32, 10);
  HadamardOperator op = HadamardOperator::build(ws, OperatorMode::exact);
  const DomainMask& outer = ws->outer_mask();
  FieldSample white = sample_white_noise(outer, {8, 2});

  FieldSample start = gff_via_hadamard(op, white, 0.0);
  CHECK(start.values.norm() == 0.0);

  FieldSample mid = gff_via_hadamard(op, white, 0.5);
  const DomainMask& half = ws->mask(5);
  for (int i = 0; i < outer.interior_count(); ++i)
    if (!half.inside(outer.interior_site(i))) CHECK(mid.values(i) == 0.0);

  // Per-draw Markov property: later minus earlier is harmonic inside V_t.
  FieldSample late = gff_via_hadamard(op, white, 0.9);
  Eigen::VectorXd increment = late.values - mid.values;
  CHECK(five_point_residual(half, outer, increment) <= check_threshold("lemma_residual_exact"));

  // Trajectory columns are exactly the per-time fields.
  Trajectory traj = trajectory(op, white);
  CHECK(traj.fields.cols() == ws->shell_count() + 1);
  CHECK(traj.fields.col(0).norm() == 0.0);
  CHECK(traj.fields.col(5) == mid.values);
  CHECK(traj.fields.col(9) == late.values);

  // Pairing curve evaluates <f, field> along the columns.
  Eigen::VectorXd f = random_vector(outer.interior_count(), 3);
  Eigen::VectorXd curve = pairing_curve(op, f, white);
  for (int k = 0; k <= ws->shell_count(); ++k)
    CHECK(curve(k) == doctest::Approx(pair_field(outer, f, traj.fields.col(k))).epsilon(1e-10));
}

TEST_CASE("sampled covariance matches the Green kernel") {
  auto ws = disk_workspace(24, 8);
  HadamardOperator op = HadamardOperator::build(ws, OperatorMode::exact);
  const DomainMask& outer = ws->outer_mask();
  auto solver = ws->solver(8);

  const int pairs[][2] = {{10, 40}, {100, 101}, {7, 180}, {55, 55}, {130, 30}};
  const int draws = 20000;
  CovAccumulator acc(6);
  Eigen::VectorXd probes(6);
  Eigen::VectorXd f = random_vector(outer.interior_count(), 4);
  for (int s = 0; s < draws; ++s) {
    FieldSample psi =
        gff_via_hadamard(op, sample_white_noise(outer, {1234, static_cast<std::uint64_t>(s)}), 1.0);
    for (int p = 0; p < 5; ++p) probes(p) = psi.values(pairs[p][0]);
    probes(5) = pair_field(outer, f, psi.values);
    acc.accumulate(probes);
  }
  MomentReport rep = acc.report();

  // Variances at the probe sites.
  for (int p = 0; p < 5; ++p) {
    const int site = outer.interior_site(pairs[p][0]);
    const double exact = solver->green_kernel(site, site);
    CHECK(std::abs(rep.variance(p) - exact) <=
          check_threshold("variance_se") * rep.se_variance(p));
  }
  // Cross covariance between the first two probes.
  const double cross = solver->green_kernel(outer.interior_site(pairs[0][0]),
                                            outer.interior_site(pairs[1][0]));
  const double se = std::sqrt((rep.covariance(0, 1) * rep.covariance(0, 1) +
                               rep.variance(0) * rep.variance(1)) /
                              static_cast<double>(rep.count));
  CHECK(std::abs(rep.covariance(0, 1) - cross) <= check_threshold("covariance_se") * se);

  // Var <f, Psi_1> equals the Dirichlet energy of the potential of f.
  Eigen::VectorXd u = solver->solve(f);
  const double energy = dirichlet_inner(outer, u, u);
  CHECK(std::abs(rep.variance(5) - energy) <=
        check_threshold("variance_se") * rep.se_variance(5));
}

TEST_CASE("spectral oracle agrees with the Green matrix and the sampler") {
  Grid grid = build_grid_box(5, 1.0);
  DomainMask box = DomainMask::from_predicate(grid, [](Point) { return true; });
  GreenSolver solver(assemble(box));
  SpectralDecomp decomp = eigendecompose(assemble(box));

  // Direct matrix identity: sum of v v^T / lambda is the Green matrix.
  Eigen::MatrixXd recon = Eigen::MatrixXd::Zero(box.interior_count(), box.interior_count());
  for (int i = 0; i < decomp.eigenvalues.size(); ++i)
    recon += decomp.eigenvectors.col(i) * decomp.eigenvectors.col(i).transpose() /
             decomp.eigenvalues(i);
  CHECK((recon - solver.green_matrix()).norm() <= 1e-9 * solver.green_matrix().norm());

  const int draws = 20000;
  CovAccumulator acc(2);
  Eigen::VectorXd probes(2);
  for (int s = 0; s < draws; ++s) {
    FieldSample psi = gff_via_spectral(decomp, {777, static_cast<std::uint64_t>(s)});
    probes(0) = psi.values(12);
    probes(1) = psi.values(6);
    acc.accumulate(probes);
  }
  MomentReport rep = acc.report();
  CHECK(std::abs(rep.mean(0)) <= check_threshold("mean_se") * rep.se_mean(0));
  CHECK(std::abs(rep.variance(0) - solver.green_matrix()(12, 12)) <=
        check_threshold("variance_se") * rep.se_variance(0));
  const double se = std::sqrt((rep.covariance(0, 1) * rep.covariance(0, 1) +
                               rep.variance(0) * rep.variance(1)) /
                              static_cast<double>(rep.count));
  CHECK(std::abs(rep.covariance(0, 1) - solver.green_matrix()(12, 6)) <=
        check_threshold("spectral_joint_se") * se);

  SpectralDecomp partial = eigendecompose(assemble(box), 3);
  CHECK_THROWS_AS(gff_via_spectral(partial, {1, 1}), Error);
}

TEST_CASE("increment rates integrate to the total pairing variance") {
  auto ws = disk_workspace(24, 8);
  HadamardOperator op = HadamardOperator::build(ws, OperatorMode::exact);
  const DomainMask& outer = ws->outer_mask();
  const double h2 = outer.grid().h * outer.grid().h;
  Eigen::VectorXd f = random_vector(outer.interior_count(), 6);

  std::vector<double> rate = increment_rate_curve(op, f, f);
  CHECK(rate[0] == 0.0);
  double total = 0.0;
  for (int k = 1; k <= ws->shell_count(); ++k) {
    CHECK(rate[static_cast<size_t>(k)] >= 0.0);
    total += rate[static_cast<size_t>(k)] * ws->flow().delta_tau(k);
  }
  const double expect = h2 * f.dot(ws->solver(8)->solve(f));
  CHECK(total == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("boundary noise carries the sweep weights") {
  auto ws = disk_workspace(32, 10);
  const double t = 0.7;
  const int kt = ws->flow().time_index(t);
  const DomainMask& mask = ws->mask(kt);
  auto ds = ws->arclength(kt);
  auto rho = ws->rho_profile(kt);

  BoundaryNoiseSample one = sample_boundary_noise(*ws, t, {44, 0});
  CHECK(one.time_index == kt);
  CHECK(one.values.size() == mask.boundary_count());
  CHECK(sample_boundary_noise(*ws, t, {44, 0}).values == one.values);

  Eigen::VectorXd phi = random_vector(mask.boundary_count(), 7);
  double expect_var = 0.0;
  for (int b = 0; b < mask.boundary_count(); ++b)
    expect_var += phi(b) * phi(b) * rho[static_cast<size_t>(b)] * ds[static_cast<size_t>(b)];

  const int draws = 20000;
  CovAccumulator acc(3);
  Eigen::VectorXd probes(3);
  const int za = mask.interior_count() / 3, zb = mask.interior_count() / 2;
  for (int s = 0; s < draws; ++s) {
    BoundaryNoiseSample xi = sample_boundary_noise(*ws, t, {44, static_cast<std::uint64_t>(s)});
    double x = 0.0;
    for (int b = 0; b < mask.boundary_count(); ++b)
      x += phi(b) * xi.values(b) * ds[static_cast<size_t>(b)];
    probes(0) = x;
    Eigen::VectorXd ext = extend_boundary_noise(*ws, xi);
    probes(1) = ext(za);
    probes(2) = ext(zb);
    acc.accumulate(probes);
  }
  MomentReport rep = acc.report();
  CHECK(std::abs(rep.variance(0) - expect_var) <=
        check_threshold("identity_mc_se") * rep.se_variance(0));

  // Harmonic extension covariance: sum over the rim of hm(z) hm(w) rho / ds.
  const Eigen::MatrixXd& hm = ws->measure(kt)->matrix();
  double expect_cov = 0.0;
  for (int b = 0; b < mask.boundary_count(); ++b)
    expect_cov += hm(za, b) * hm(zb, b) * rho[static_cast<size_t>(b)] / ds[static_cast<size_t>(b)];
  const double se = std::sqrt((rep.covariance(1, 2) * rep.covariance(1, 2) +
                               rep.variance(1) * rep.variance(2)) /
                              static_cast<double>(rep.count));
  CHECK(std::abs(rep.covariance(1, 2) - expect_cov) <= check_threshold("covariance_se") * se);

  CHECK_THROWS_AS(sample_boundary_noise(*ws, 0.123, {1, 1}), Error);
}

TEST_CASE("boundary averages agree between trace and noise routes") {
  auto ws = disk_workspace(48, 16);
  HadamardOperator op = HadamardOperator::build(ws, OperatorMode::exact);
  PointMass mass{ws->flow().anchor_sites()[0], 1.0};
  std::span<const PointMass> f(&mass, 1);

  for (std::uint64_t s = 0; s < 5; ++s) {
    FieldSample white = sample_white_noise(ws->outer_mask(), {606, s});
    BoundaryAverage avg = boundary_average(op, white, 0.75, f);
    CHECK(avg.boundary_route ==
          doctest::Approx(avg.noise_route).epsilon(check_threshold("route_agreement_rel")));
  }

  PointMass off{ws->outer_mask().interior_site(10), 1.0};
  CHECK_THROWS_AS(
      boundary_average(op, sample_white_noise(ws->outer_mask(), {1, 1}), 0.75,
                       std::span<const PointMass>(&off, 1)),
      Error);
  try {
    validate_skeleton_support(ws->flow(), std::span<const PointMass>(&off, 1));
  } catch (const Error& e) {
    CHECK(e.code() == errc::support_not_on_skeleton);
  }
}

TEST_CASE("boundary average variance matches quadrature and energy") {
  auto ws = disk_workspace(48, 16);
  HadamardOperator op = HadamardOperator::build(ws, OperatorMode::exact);
  PointMass mass{ws->flow().anchor_sites()[0], 1.0};
  std::span<const PointMass> f(&mass, 1);
  const double t = 0.75;
  const int kt = ws->flow().time_index(t);

  // Exact operator tail variance.
  Eigen::VectorXd fvec =
      point_mass_vector(ws->outer_mask(), f);
  Eigen::VectorXd coefs = op.apply_adjoint(1.0, fvec) - op.apply_adjoint(t, fvec);
  double exact_var = 0.0;
  for (int k = 1; k <= ws->shell_count(); ++k) {
    const OperatorBlock& block = op.block(k);
    const int off = op.rank_up_to(k - 1);
    for (int j = 0; j < block.rank(); ++j)
      exact_var += coefs(off + j) * coefs(off + j) * block.weights(j);
  }

  const int draws = 20000;
  CovAccumulator acc(1);
  Eigen::VectorXd probe(1);
  for (int s = 0; s < draws; ++s) {
    FieldSample white = sample_white_noise(ws->outer_mask(), {4242, static_cast<std::uint64_t>(s)});
    probe(0) = boundary_average(op, white, t, f).noise_route;
    acc.accumulate(probe);
  }
  MomentReport rep = acc.report();
  CHECK(std::abs(rep.variance(0) - exact_var) <=
        check_threshold("variance_se") * rep.se_variance(0));
  CHECK(std::abs(rep.mean(0)) <= check_threshold("mean_se") * rep.se_mean(0));

  // Deterministic routes: shell quadrature vs Green-energy difference.
  const double quad = boundary_average_cov(*ws, f, f, t, t);
  const int site = mass.site;
  const double energy = ws->solver(ws->shell_count())->green_kernel(site, site) -
                        ws->solver(kt)->green_kernel(site, site);
  CHECK(quad == doctest::Approx(energy).epsilon(check_threshold("route_var_rel")));
  CHECK(exact_var == doctest::Approx(energy).epsilon(1e-9));
}

TEST_CASE("standardized pairings are Gaussian at scale") {
  auto ws = disk_workspace(16, 5);
  HadamardOperator op = HadamardOperator::build(ws, OperatorMode::exact);
  const DomainMask& outer = ws->outer_mask();
  Eigen::VectorXd f = random_vector(outer.interior_count(), 9);
  Eigen::VectorXd coefs = op.apply_adjoint(1.0, f);

  const int draws = 100000;
  CovAccumulator acc(1);
  Eigen::VectorXd probe(1);
  for (int s = 0; s < draws; ++s) {
    Eigen::VectorXd curve =
        pairing_curve(op, coefs, noise_coordinates(op, {31337, static_cast<std::uint64_t>(s)}));
    probe(0) = curve(ws->shell_count());
    acc.accumulate(probe);
  }
  MomentReport rep = acc.report();
  CHECK(std::abs(rep.skewness(0)) <= check_threshold("gaussian_skewness"));
  CHECK(std::abs(rep.excess_kurtosis(0)) <= check_threshold("gaussian_excess_kurtosis"));
  CHECK(std::abs(rep.mean(0)) <= check_threshold("mean_se") * rep.se_mean(0));
}

TEST_CASE("time change report is deterministic across thread counts") {
  auto ws = disk_workspace(32, 10);
  HadamardOperator op = HadamardOperator::build(ws, OperatorMode::exact);
  PointMass mass{ws->flow().anchor_sites()[0], 1.0};
  Eigen::VectorXd f = point_mass_vector(ws->outer_mask(), std::span<const PointMass>(&mass, 1));

  TimeChangeReport one = time_change_check(op, f, 4000, {2024, 0}, 1);
  TimeChangeReport three = time_change_check(op, f, 4000, {2024, 0}, 3);
  REQUIRE(one.empirical_var.size() == three.empirical_var.size());
  for (size_t k = 0; k < one.empirical_var.size(); ++k)
    CHECK(one.empirical_var[k] ==
          doctest::Approx(three.empirical_var[k]).epsilon(1e-10));

  // Quadrature accumulates the rate curve; the ratio hovers near one once a
  // few shells are resolved.
  std::vector<double> kappa = ws->kappa_curve(f);
  double integral = 0.0;
  for (int k = 1; k <= 10; ++k) {
    integral += kappa[static_cast<size_t>(k)] * ws->flow().delta_tau(k);
    CHECK(one.quadrature[static_cast<size_t>(k - 1)] == doctest::Approx(integral).epsilon(1e-12));
    if (k >= 4) CHECK(one.ratio[static_cast<size_t>(k - 1)] == doctest::Approx(1.0).epsilon(0.35));
  }
  CHECK(one.increment_z.size() == 6);
  CHECK_THROWS_AS(time_change_check(op, f, 1, {1, 0}, 1), Error);
}

TEST_SUITE_END();
