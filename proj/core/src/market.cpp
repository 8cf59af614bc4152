#include "carbonmkt/market.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "carbonmkt/csv.hpp"

namespace carbonmkt {

Eigen::VectorXd equilibrium_price(const RiccatiSolution& sol, const Eigen::MatrixXd& xbar) {
  if (sol.variant != Variant::endogenous)
    throw ConfigError("equilibrium_price: endogenous solution required");
  const int n = sol.grid.n;
  if (xbar.cols() != n)
    throw StructuralError("equilibrium_price: mean path does not match the grid");
  Eigen::VectorXd omega(n);
  for (int k = 0; k < n; ++k)
    omega(k) = -2.0 * (sol.Pi[k].row(1).dot(xbar.col(k)) + sol.phi[k](1));
  return omega;
}

Eigen::MatrixXd trading_rates(const std::vector<Eigen::MatrixXd>& Y,
                              const Eigen::MatrixXd& Ybar, double nu) {
  const int N = static_cast<int>(Y.size());
  const int n = static_cast<int>(Ybar.cols());
  Eigen::MatrixXd beta(N, n);
  for (int i = 0; i < N; ++i)
    beta.row(i) = -2.0 * nu * (Y[i].row(1) - Ybar.row(1));
  return beta;
}

ClearingStats clearing_residual(const std::vector<int>& Ns,
                                const std::vector<double>& times,
                                const std::vector<Eigen::MatrixXd>& residuals) {
  if (std::set<int>(Ns.begin(), Ns.end()).size() < 2)
    throw StructuralError("clearing_residual: need at least two distinct N");
  if (residuals.size() != Ns.size())
    throw StructuralError("clearing_residual: one residual block per N required");

  ClearingStats st;
  st.Ns = Ns;
  st.times = times;
  const int nn = static_cast<int>(Ns.size());
  const int nt = static_cast<int>(times.size());
  st.residual_mean.resize(nn, nt);
  st.residual_sq_mean.resize(nn, nt);
  Eigen::VectorXd logN(nn), logR(nn);
  for (int i = 0; i < nn; ++i) {
    const Eigen::MatrixXd& block = residuals[i];  // paths x times
    if (block.cols() != nt)
      throw StructuralError("clearing_residual: residual block width mismatch");
    st.residual_mean.row(i) = block.colwise().mean();
    st.residual_sq_mean.row(i) = block.array().square().colwise().mean();
    logN(i) = std::log(static_cast<double>(Ns[i]));
    logR(i) = std::log(st.residual_sq_mean.row(i).mean());
  }
  if (!logR.allFinite()) {
    // Degenerate case (e.g. residual identically zero): no meaningful fit.
    st.slope = 0.0;
    st.intercept = -std::numeric_limits<double>::infinity();
    st.r2 = 1.0;
    return st;
  }
  const double xm = logN.mean(), ym = logR.mean();
  const double sxx = (logN.array() - xm).square().sum();
  const double sxy = ((logN.array() - xm) * (logR.array() - ym)).sum();
  st.slope = sxy / sxx;
  st.intercept = ym - st.slope * xm;
  const double sst = (logR.array() - ym).square().sum();
  const double ssr = (logR.array() - (st.intercept + st.slope * logN.array())).square().sum();
  st.r2 = sst > 0.0 ? 1.0 - ssr / sst : 1.0;
  return st;
}

void write_clearing_csv(const ClearingStats& st, std::ostream& os) {
  os << "N,t,residual_mean,residual_sq_mean\n";
  for (std::size_t i = 0; i < st.Ns.size(); ++i)
    for (std::size_t j = 0; j < st.times.size(); ++j)
      csv::write_row(os, {std::to_string(st.Ns[i]), csv::num(st.times[j]),
                          csv::num(st.residual_mean(i, j)),
                          csv::num(st.residual_sq_mean(i, j))});
  csv::write_row(os, {"fit", csv::num(st.slope), csv::num(st.intercept), csv::num(st.r2)});
}

}  // namespace carbonmkt
