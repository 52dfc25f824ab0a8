#include <benchmark/benchmark.h>

#include <memory>

#include "hgff/experiment.hpp"
#include "hgff/fields.hpp"
#include "hgff/hadamard.hpp"
#include "hgff/stats.hpp"
#include "hgff/workspace.hpp"

namespace {

using namespace hgff;

std::shared_ptr<FlowWorkspace> disk_workspace(int n, int shells) {
  Grid grid = build_grid_box(n, 4.0 / 3.0);
  return std::make_shared<FlowWorkspace>(build_flow(grid, DiskFlow{{0.0, 0.0}, 1.0}, shells));
}

void BM_laplacian_factor(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  auto ws = disk_workspace(n, n / 3);
  const DomainMask& mask = ws->outer_mask();
  for (auto _ : state) {
    GreenSolver solver(assemble(mask));
    benchmark::DoNotOptimize(&solver);
  }
  state.SetLabel(std::to_string(mask.interior_count()) + " cells");
}
BENCHMARK(BM_laplacian_factor)->Arg(32)->Arg(64)->Arg(96)->Unit(benchmark::kMillisecond);

void BM_poisson_solve(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  auto ws = disk_workspace(n, n / 3);
  auto solver = ws->solver(ws->shell_count());
  Eigen::VectorXd f = Eigen::VectorXd::Ones(ws->outer_mask().interior_count());
  for (auto _ : state) benchmark::DoNotOptimize(solver->solve(f));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_poisson_solve)->Arg(32)->Arg(64)->Arg(96)->Unit(benchmark::kMillisecond);

void BM_operator_build(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    state.PauseTiming();
    auto ws = disk_workspace(n, n / 3);  // fresh caches each round
    state.ResumeTiming();
    HadamardOperator op = HadamardOperator::build(ws, OperatorMode::exact);
    benchmark::DoNotOptimize(op.total_rank());
  }
}
BENCHMARK(BM_operator_build)->Arg(24)->Arg(48)->Unit(benchmark::kMillisecond);

void BM_pairing_draws(benchmark::State& state) {
  auto ws = disk_workspace(48, 16);
  auto op = std::make_shared<HadamardOperator>(HadamardOperator::build(ws, OperatorMode::exact));
  PointMass mass{site_at(ws->grid(), {0.0, 0.0}), 1.0};
  Eigen::VectorXd f = point_mass_vector(ws->outer_mask(), std::span<const PointMass>(&mass, 1));
  Eigen::VectorXd coefs = op->apply_adjoint(1.0, f);
  std::uint64_t s = 0;
  for (auto _ : state) {
    Eigen::VectorXd curve = pairing_curve(*op, coefs, noise_coordinates(*op, {7, s++}));
    benchmark::DoNotOptimize(curve.sum());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_pairing_draws);

void BM_moment_accumulation(benchmark::State& state) {
  CovAccumulator acc(8);
  Eigen::VectorXd probes(8);
  NormalStream stream({11, 0});
  std::uint64_t key = 0;
  for (auto _ : state) {
    for (int i = 0; i < 8; ++i) probes(i) = stream.normal(key++);
    acc.accumulate(probes);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_moment_accumulation);

}  // namespace

BENCHMARK_MAIN();
