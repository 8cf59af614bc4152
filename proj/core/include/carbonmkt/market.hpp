#pragma once

#include <Eigen/Dense>
#include <ostream>
#include <vector>

#include "carbonmkt/riccati.hpp"
#include "carbonmkt/simulate.hpp"

namespace carbonmkt {

/// Equilibrium permit price along one mean path:
/// omega(t) = -2 (Pi_21 Kbar + Pi_22 Xtildebar) - 2 phi_2.
/// Requires the endogenous solution variant.
Eigen::VectorXd equilibrium_price(const RiccatiSolution& sol, const Eigen::MatrixXd& xbar);

/// Per-particle trading rates beta_i(t) = -2 nu (Y2_i - Ybar2); one row per
/// particle, one column per node.
Eigen::MatrixXd trading_rates(const std::vector<Eigen::MatrixXd>& Y,
                              const Eigen::MatrixXd& Ybar, double nu);

struct ClearingStats {
  std::vector<int> Ns;
  std::vector<double> times;
  Eigen::MatrixXd residual_mean;     // Ns x times, mean over common paths
  Eigen::MatrixXd residual_sq_mean;  // Ns x times, mean of squares
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Decay fit of the squared clearing residual E|(1/N) sum beta_i|^2 across
/// N. residuals[i] holds one row per common path and one column per probe
/// time for N = Ns[i]; the slope is fitted on the time-averaged squared
/// residual in log-log coordinates.
ClearingStats clearing_residual(const std::vector<int>& Ns,
                                const std::vector<double>& times,
                                const std::vector<Eigen::MatrixXd>& residuals);

/// CSV: N, t, residual_mean, residual_sq_mean rows, then one summary row
/// "fit,<slope>,<intercept>,<r2>".
void write_clearing_csv(const ClearingStats& stats, std::ostream& os);

}  // namespace carbonmkt
