#include "carbonmkt/carbon.hpp"

#include <cmath>
#include <sstream>

namespace carbonmkt {

namespace {

void check(bool ok, const char* what) {
  if (!ok) throw ValidationError(what);
}

}  // namespace

void CarbonParams::validate() const {
  check(nu > 0.0, "nu must be positive (R must be positive definite)");
  check(eta > 0.0, "eta must be positive");
  check(gamma >= 0.0 && gamma <= 1.0, "gamma must lie in [0, 1]");
  check(rho >= 0.0 && rho <= 1.0, "rho must lie in [0, 1]");
  check(c12 > 0.0, "c12 must be positive");
  check(c22 > 0.0, "c22 must be positive");
  check(lambda >= 0.0, "lambda must be nonnegative");
  check(T > 0.0, "T must be positive");
  check(std::isfinite(kappa_f) && std::isfinite(kappa_g) && std::isfinite(kappa_e),
        "capital rates must be finite");
  check(std::isfinite(sigma) && std::isfinite(sigma1) && std::isfinite(sigma2) &&
            std::isfinite(sigma_tilde2),
        "volatilities must be finite");
}

GeneralLQSpec build_spec(const CarbonParams& p, const TimeGrid& grid, Variant variant,
                         const Eigen::VectorXd* price_schedule) {
  p.validate();
  if (variant == Variant::exogenous && price_schedule == nullptr)
    throw ConfigError("exogenous variant requires a permit price schedule");
  if (variant != Variant::exogenous && price_schedule != nullptr)
    throw ConfigError("endogenous variant does not take a price schedule");
  if (price_schedule != nullptr && price_schedule->size() != grid.n)
    throw ConfigError("price schedule length must match the grid");
  if (p.atilde_schedule.size() != 0 && p.atilde_schedule.size() != grid.n)
    throw ConfigError("allowance schedule length must match the grid");

  GeneralLQSpec s = GeneralLQSpec::zero(2, 2, 3, 4, grid);
  const int n = grid.n;

  s.A << -p.delta, 0.0, 0.0, 0.0;
  s.B << p.kappa_f, p.kappa_g, 0.0, 0.0,
        -p.kappa_e, 0.0, 1.0, 1.0;
  s.C[0] << p.sigma, 0.0, 0.0, 0.0;
  // Constant idiosyncratic and common diffusion columns.
  const double root = std::sqrt(std::max(0.0, 1.0 - p.rho * p.rho));
  s.C0[1].row(1).setConstant(-p.sigma1 * root);
  s.C0[2].row(1).setConstant(-p.sigma2);
  s.F0[0].row(1).setConstant(-p.sigma1 * p.rho);
  s.F0[1].row(1).setConstant(p.sigma_tilde2);

  s.Q(0, 0) = p.b * (1.0 - p.gamma) * p.A_k * p.A_k;
  s.Qbar(0, 0) = p.b * p.gamma * p.A_k * p.A_k / 2.0;
  s.R.diagonal() << p.c12, p.c22, 1.0 / (2.0 * p.eta), 1.0 / (2.0 * p.nu);
  s.H(1, 1) = p.lambda;
  s.q.row(0).setConstant(-p.a * p.A_k / 2.0);

  if (p.atilde_schedule.size() == n)
    s.A0.row(1) = p.atilde_schedule.transpose();
  else
    s.A0.row(1).setConstant(p.atilde);

  s.r.row(0).setConstant(p.c11 / 2.0);
  s.r.row(1).setConstant(p.c21 / 2.0);
  s.r.row(2).setConstant(p.h / 2.0);
  if (variant == Variant::exogenous) {
    s.r.row(3) = 0.5 * price_schedule->transpose();
  } else {
    s.rtilde << p.c11 / 2.0, p.c21 / 2.0, p.h / 2.0, 0.0;
    // r mirrors rtilde so that residual checks and the general solver see
    // the same linear control cost.
    s.r.row(3).setZero();
    // The mean-adjoint weight must be -1 so that the trading rate reads
    // beta = -2 nu (Y2 - Ybar2): its conditional mean then vanishes and the
    // market clears. A weight of -1/2 would leave a residual mean trade.
    s.Dmkt(3, 1) = -1.0;
  }
  s.ensure_wellformed();
  return s;
}

Wellposedness check_wellposedness(const CarbonParams& p) {
  Wellposedness w;
  w.cond1 = p.kappa_f * p.kappa_f / p.c12 + p.kappa_g * p.kappa_g / p.c22 -
            p.kappa_f * p.kappa_e / p.c12;
  w.cond2 = 2.0 * p.eta + p.nu + p.kappa_e * p.kappa_e / p.c12 -
            p.kappa_f * p.kappa_e / p.c12;
  w.pass = w.cond1 > 0.0 && w.cond2 > 0.0;
  return w;
}

double inverse_demand(double k, double kbar, const CarbonParams& p) {
  return p.a - p.b * (1.0 - p.gamma) * p.A_k * k - p.b * p.gamma * p.A_k * kbar;
}

Controls coupling_controls(const Eigen::Vector2d& y, const Eigen::Vector2d& ybar,
                           std::optional<double> omega, const CarbonParams& p,
                           Variant variant) {
  Controls c;
  // First row of -R^-1 B^T: the y2 weight carries the emission intensity
  // kappa_e, not kappa_f (B column one is (kappa_f, -kappa_e)).
  c.Kf = -(p.kappa_f / p.c12) * y(0) + (p.kappa_e / p.c12) * y(1) -
         p.c11 / (2.0 * p.c12);
  c.Kg = -(p.kappa_g / p.c22) * y(0) - p.c21 / (2.0 * p.c22);
  c.alpha = -2.0 * p.eta * y(1) - p.eta * p.h;
  if (variant == Variant::endogenous) {
    c.beta = -2.0 * p.nu * y(1) + 2.0 * p.nu * ybar(1);
  } else {
    if (!omega.has_value())
      throw ConfigError("exogenous coupling requires the permit price");
    c.beta = -2.0 * p.nu * y(1) - p.nu * *omega;
  }
  return c;
}

double running_cost(const Eigen::Vector2d& x, const Eigen::Vector2d& xbar,
                    const Controls& v, double omega, const CarbonParams& p,
                    CostMode mode) {
  const double price = inverse_demand(x(0), xbar(0), p);
  const double output = p.A_k * (mode == CostMode::NE ? x(0) : xbar(0));
  return -price * output + v.beta * omega + v.beta * v.beta / (2.0 * p.nu) +
         p.h * v.alpha + v.alpha * v.alpha / (2.0 * p.eta) + p.c11 * v.Kf +
         p.c12 * v.Kf * v.Kf + p.c21 * v.Kg + p.c22 * v.Kg * v.Kg;
}

}  // namespace carbonmkt
