#include <doctest.h>

#include <cmath>
#include <sstream>

#include "carbonmkt/market.hpp"
#include "carbonmkt/simulate.hpp"
#include "helpers.hpp"

using namespace carbonmkt;
using testutil::table2;

namespace {

struct MarketSetup {
  TimeGrid grid;
  GeneralLQSpec spec;
  RiccatiSolution sol;
  FeedbackGains gains;
  Eigen::Vector2d x0;

  explicit MarketSetup(const CarbonParams& p, double dt)
      : grid(TimeGrid::make(p.T, dt)),
        spec(build_spec(p, grid, Variant::endogenous)),
        sol(solve_endogenous(spec, grid)),
        gains(make_feedback_gains(sol, spec)),
        x0(p.kappa0, p.x_tilde0()) {}
};

}  // namespace

TEST_CASE("equilibrium price terminal pin") {
  CarbonParams p = table2();
  const MarketSetup ms(p, 1e-2);
  const Eigen::MatrixXd xbar = simulate_mean_path(
      ms.sol, ms.spec, ms.gains, ms.x0, common_increments(1, ms.grid, 0, 2));
  const Eigen::VectorXd omega = equilibrium_price(ms.sol, xbar);
  const int last = ms.grid.n - 1;
  CHECK(std::abs(omega(last) + 2.0 * p.lambda * xbar(1, last)) <= 1e-12);

  SUBCASE("zero terminal penalty pins the terminal price at zero") {
    CarbonParams pz = table2();
    pz.lambda = 0.0;
    const MarketSetup mz(pz, 1e-2);
    const Eigen::MatrixXd xb = simulate_mean_path(
        mz.sol, mz.spec, mz.gains, mz.x0, common_increments(1, mz.grid, 0, 2));
    CHECK(equilibrium_price(mz.sol, xb)(last) == 0.0);
  }

  SUBCASE("exogenous solutions carry no equilibrium price") {
    Eigen::VectorXd price;
    const GeneralLQSpec sx = testutil::carbon_exogenous(p, ms.grid, price, 10.0);
    const RiccatiSolution solx = solve_exogenous(sx, ms.grid);
    CHECK_THROWS_AS(equilibrium_price(solx, xbar), ConfigError);
  }

  SUBCASE("mean path must match the grid") {
    CHECK_THROWS_AS(equilibrium_price(ms.sol, xbar.leftCols(10)), StructuralError);
  }
}

TEST_CASE("price spread across common paths starts at zero and opens up") {
  const MarketSetup ms(table2(), 1e-2);
  const int paths = 30;
  const int k0 = ms.grid.node_of(0.0), kmid = ms.grid.node_of(2.5);
  Eigen::VectorXd at0(paths), atmid(paths);
  for (int p = 0; p < paths; ++p) {
    const Eigen::MatrixXd xbar = simulate_mean_path(
        ms.sol, ms.spec, ms.gains, ms.x0, common_increments(21, ms.grid, p, 2));
    const Eigen::VectorXd omega = equilibrium_price(ms.sol, xbar);
    at0(p) = omega(k0);
    atmid(p) = omega(kmid);
  }
  CHECK(at0.maxCoeff() - at0.minCoeff() == 0.0);  // deterministic initial state
  CHECK(atmid.maxCoeff() - atmid.minCoeff() > 0.0);
}

TEST_CASE("trading rates") {
  const CarbonParams p = table2();

  SUBCASE("vanish without idiosyncratic noise") {
    CarbonParams pz = p;
    pz.sigma = 0.0;
    pz.sigma2 = 0.0;
    pz.rho = 1.0;  // all idiosyncratic diffusion columns vanish
    const MarketSetup ms(pz, 1e-2);
    SimConfig cfg;
    cfg.dt = 1e-2;
    cfg.n_particles = 4;
    const NoiseBundle nb = generate_noise(cfg, ms.grid, 0, 2, 3);
    const Eigen::MatrixXd xbar =
        simulate_mean_path(ms.sol, ms.spec, ms.gains, ms.x0, nb.common);
    PathEnsemble e = simulate_particles(ms.sol, ms.spec, ms.gains, xbar, nb, ms.x0);
    reconstruct_adjoint(ms.sol, e);
    const Eigen::MatrixXd beta = trading_rates(e.Y, e.Ybar, pz.nu);
    CHECK(beta.cwiseAbs().maxCoeff() <= 1e-9);
  }

  SUBCASE("particle mean is a CLT-sized residual") {
    const MarketSetup ms(p, 1e-2);
    SimConfig cfg;
    cfg.dt = 1e-2;
    cfg.n_particles = 200;
    cfg.seed = 2;
    const NoiseBundle nb = generate_noise(cfg, ms.grid, 0, 2, 3);
    const Eigen::MatrixXd xbar =
        simulate_mean_path(ms.sol, ms.spec, ms.gains, ms.x0, nb.common);
    PathEnsemble e = simulate_particles(ms.sol, ms.spec, ms.gains, xbar, nb, ms.x0);
    reconstruct_adjoint(ms.sol, e);
    const Eigen::MatrixXd beta = trading_rates(e.Y, e.Ybar, p.nu);
    const int k = ms.grid.node_of(2.5);
    const double mean = beta.col(k).mean();
    const double sd = std::sqrt(
        (beta.col(k).array() - mean).square().sum() / (cfg.n_particles - 1));
    CHECK(std::abs(mean) <= 4.0 * sd / std::sqrt(double(cfg.n_particles)));
  }

  SUBCASE("scale linearly in the market depth") {
    std::vector<Eigen::MatrixXd> Y(2, Eigen::MatrixXd::Random(2, 5));
    const Eigen::MatrixXd Ybar = Eigen::MatrixXd::Random(2, 5);
    const Eigen::MatrixXd b1 = trading_rates(Y, Ybar, 10.0);
    const Eigen::MatrixXd b2 = trading_rates(Y, Ybar, 20.0);
    CHECK((b2 - 2.0 * b1).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("clearing residual decay fit") {
  const std::vector<double> times = {1.0, 2.0, 3.0};

  SUBCASE("needs at least two distinct particle counts") {
    const std::vector<Eigen::MatrixXd> blocks(2, Eigen::MatrixXd::Zero(1, 3));
    CHECK_THROWS_AS(clearing_residual({100, 100}, times, blocks), StructuralError);
  }

  SUBCASE("block shapes are checked") {
    const std::vector<Eigen::MatrixXd> blocks(2, Eigen::MatrixXd::Zero(1, 2));
    CHECK_THROWS_AS(clearing_residual({10, 100}, times, blocks), StructuralError);
  }

  SUBCASE("synthetic 1/N residuals fit slope -1 exactly") {
    const std::vector<int> Ns = {10, 100, 1000};
    std::vector<Eigen::MatrixXd> blocks;
    for (int N : Ns)
      blocks.push_back(Eigen::MatrixXd::Constant(4, 3, 1.0 / std::sqrt(double(N))));
    const ClearingStats st = clearing_residual(Ns, times, blocks);
    CHECK(st.slope == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(st.r2 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(st.residual_sq_mean(0, 0) == doctest::Approx(0.1).epsilon(1e-12));
  }

  SUBCASE("quadrupling N quarters the squared residual") {
    const std::vector<int> Ns = {100, 400};
    std::vector<Eigen::MatrixXd> blocks;
    for (int N : Ns)
      blocks.push_back(Eigen::MatrixXd::Constant(2, 3, 1.0 / std::sqrt(double(N))));
    const ClearingStats st = clearing_residual(Ns, times, blocks);
    CHECK(st.residual_sq_mean(0, 0) / st.residual_sq_mean(1, 0) ==
          doctest::Approx(4.0).epsilon(1e-12));
  }

  SUBCASE("identically zero residuals degrade gracefully") {
    const std::vector<Eigen::MatrixXd> blocks(2, Eigen::MatrixXd::Zero(3, 3));
    const ClearingStats st = clearing_residual({10, 100}, times, blocks);
    CHECK(st.slope == 0.0);
    CHECK(std::isinf(st.intercept));
    CHECK(st.r2 == 1.0);
  }
}

TEST_CASE("clearing csv layout") {
  std::vector<Eigen::MatrixXd> blocks;
  for (int N : {10, 100})
    blocks.push_back(Eigen::MatrixXd::Constant(1, 2, 1.0 / std::sqrt(double(N))));
  const ClearingStats st = clearing_residual({10, 100}, {1.0, 2.0}, blocks);
  std::ostringstream os;
  write_clearing_csv(st, os);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "N,t,residual_mean,residual_sq_mean");
  int rows = 0;
  std::string last;
  while (std::getline(is, line)) {
    ++rows;
    last = line;
  }
  CHECK(rows == 5);  // 2 Ns x 2 times + fit row
  CHECK(last.rfind("fit,", 0) == 0);
}
