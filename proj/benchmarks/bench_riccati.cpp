#include <benchmark/benchmark.h>

#include "carbonmkt/simulate.hpp"

using namespace carbonmkt;

namespace {

struct Fixture {
  CarbonParams params;
  TimeGrid grid;
  GeneralLQSpec spec;
  RiccatiSolution sol;
  FeedbackGains gains;
  Eigen::Vector2d x0;

  explicit Fixture(double dt)
      : grid(TimeGrid::make(params.T, dt)),
        spec(build_spec(params, grid, Variant::endogenous)),
        sol(solve_endogenous(spec, grid)),
        gains(make_feedback_gains(sol, spec)),
        x0(params.kappa0, params.x_tilde0()) {}
};

void BM_riccati_solve(benchmark::State& state) {
  const CarbonParams p;
  const TimeGrid g = TimeGrid::make(p.T, 1.0 / static_cast<double>(state.range(0)));
  const GeneralLQSpec s = build_spec(p, g, Variant::endogenous);
  for (auto _ : state) {
    RiccatiSolution sol = solve_endogenous(s, g);
    benchmark::DoNotOptimize(sol.P[0](0, 0));
  }
  state.SetItemsProcessed(state.iterations() * g.steps());
}
BENCHMARK(BM_riccati_solve)->Arg(100)->Arg(1000);

void BM_particle_step(benchmark::State& state) {
  const Fixture f(1e-2);
  SimConfig cfg;
  cfg.dt = 1e-2;
  cfg.n_particles = static_cast<int>(state.range(0));
  const NoiseBundle nb = generate_noise(cfg, f.grid, 0, f.spec.d0, f.spec.d1);
  const Eigen::MatrixXd xbar =
      simulate_mean_path(f.sol, f.spec, f.gains, f.x0, nb.common);
  for (auto _ : state) {
    PathEnsemble e = simulate_particles(f.sol, f.spec, f.gains, xbar, nb, f.x0);
    benchmark::DoNotOptimize(e.X.back()(0, f.grid.n - 1));
  }
  state.SetItemsProcessed(state.iterations() * cfg.n_particles * f.grid.steps());
}
BENCHMARK(BM_particle_step)->Arg(10)->Arg(100);

void BM_noise_generation(benchmark::State& state) {
  const TimeGrid g = TimeGrid::make(5.0, 1e-2);
  for (auto _ : state) {
    const Eigen::MatrixXd dw = idio_increments(1, g, 0, 0, 3);
    benchmark::DoNotOptimize(dw(0, 0));
  }
  state.SetItemsProcessed(state.iterations() * 3 * g.steps());
}
BENCHMARK(BM_noise_generation);

}  // namespace

BENCHMARK_MAIN();
