#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "carbonmkt/carbon.hpp"
#include "carbonmkt/lq_spec.hpp"
#include "carbonmkt/riccati.hpp"
#include "carbonmkt/time_grid.hpp"

namespace carbonmkt {

struct SimConfig {
  double dt = 1e-3;
  int n_common = 50;     // common-noise paths
  int n_particles = 100; // particles per common path
  std::uint64_t seed = 0;
  Variant variant = Variant::endogenous;

  void validate() const {
    if (!(dt > 0.0)) throw ConfigError("SimConfig: dt must be positive");
    if (n_common < 1 || n_particles < 1)
      throw ConfigError("SimConfig: path counts must be at least 1");
  }
};

/// Brownian increments (already scaled by sqrt(dt)) for one common path.
/// Reproducible from (seed, path, particle) alone.
struct NoiseBundle {
  Eigen::MatrixXd common;             // d0 x steps
  std::vector<Eigen::MatrixXd> idio;  // n_particles entries, d1 x steps
};

Eigen::MatrixXd common_increments(std::uint64_t seed, const TimeGrid& grid,
                                  std::uint64_t path, int d0);
Eigen::MatrixXd idio_increments(std::uint64_t seed, const TimeGrid& grid,
                                std::uint64_t path, std::uint64_t particle, int d1);
NoiseBundle generate_noise(const SimConfig& config, const TimeGrid& grid,
                           std::uint64_t path, int d0, int d1);

/// One common-noise draw: the conditional-mean path, N particle paths, the
/// applied controls, and (after reconstruct_adjoint) the adjoint paths.
struct PathEnsemble {
  TimeGrid grid;
  Eigen::MatrixXd xbar;              // d x n
  std::vector<Eigen::MatrixXd> X;    // per particle, d x n
  std::vector<Eigen::MatrixXd> V;    // per particle, d2 x n
  std::vector<Eigen::MatrixXd> Y;    // per particle, d x n
  Eigen::MatrixXd Ybar;              // d x n
};

/// Euler path of the autonomous conditional-mean dynamics driven by the
/// common increments only.
Eigen::MatrixXd simulate_mean_path(const RiccatiSolution& sol, const GeneralLQSpec& spec,
                                   const FeedbackGains& gains, const Eigen::VectorXd& x0,
                                   const Eigen::MatrixXd& common);

/// Euler particle paths around a given mean path, one per idiosyncratic
/// noise stream in the bundle.
/// A nonzero v_offset is added to every applied control (deviation studies
/// around the optimal feedback); the mean path is left untouched.
PathEnsemble simulate_particles(const RiccatiSolution& sol, const GeneralLQSpec& spec,
                                const FeedbackGains& gains, const Eigen::MatrixXd& xbar,
                                const NoiseBundle& noise, const Eigen::VectorXd& x0,
                                const Eigen::VectorXd* v_offset = nullptr);

/// Fills Y and Ybar via the decoupling map Y = P (X - Xbar) + Pi Xbar + phi.
void reconstruct_adjoint(const RiccatiSolution& sol, PathEnsemble& ensemble);

struct AdjointDiffusions {
  // Z[i][k] is d x d1, Z0[i][k] is d x d0, for particle i at node k.
  std::vector<std::vector<Eigen::MatrixXd>> Z;
  std::vector<std::vector<Eigen::MatrixXd>> Z0;
};
AdjointDiffusions reconstruct_z(const RiccatiSolution& sol, const GeneralLQSpec& spec,
                                const PathEnsemble& ensemble);

struct CostEstimate {
  double mean = 0.0;
  double half_width = 0.0;  // 1.96 * standard error
};

/// Trapezoidal time integral of the running cost plus the terminal penalty,
/// averaged over the particles of one ensemble.
CostEstimate estimate_cost(const PathEnsemble& ensemble, const CarbonParams& params,
                           const Eigen::VectorXd& omega, CostMode mode);

/// Cooperation gap from the closed-form expression: b*gamma*A_k^2/2 times
/// the Monte Carlo average of the time integral of the mean capital squared.
double price_of_anarchy(const std::vector<Eigen::MatrixXd>& mean_paths,
                        const CarbonParams& params, const TimeGrid& grid);

double trapezoid(const Eigen::VectorXd& values, double dt);

}  // namespace carbonmkt
