#pragma once

#include <Eigen/Dense>
#include <optional>

#include "carbonmkt/lq_spec.hpp"
#include "carbonmkt/riccati.hpp"
#include "carbonmkt/time_grid.hpp"

namespace carbonmkt {

// Named economic parameters of the cap-and-trade model. Defaults are the
// baseline calibration (gamma = 0.5, mid terminal penalty).
struct CarbonParams {
  double kappa_f = 5.0;        // fossil capital productivity rate, 1/year
  double kappa_g = 1.7;        // green capital rate; baseline ties it to 3*gamma + 0.2
  double kappa_e = 2.0;        // emission intensity of fossil input
  double delta = 0.01;         // capital depreciation, 1/year
  double sigma = 0.005;        // capital volatility, 1/sqrt(year)
  double sigma1 = 0.2;         // emission volatility, Gtons/sqrt(year)
  double sigma2 = 0.5;         // second emission volatility, Gtons/sqrt(year)
  double sigma_tilde2 = 0.2;   // allowance allocation volatility, Gtons/sqrt(year)
  double rho = 0.92;           // business-cycle correlation, in [0, 1]
  double a = 50.0;             // demand intercept, Eur
  double b = 0.07;             // demand slope, Eur per unit output
  double gamma = 0.5;          // competition degree, in [0, 1]
  double A_k = 2.0;            // productivity
  double nu = 285.713;         // market depth, Gton^2/Eur/year
  double eta = 0.211;          // abatement flexibility, Gton^2/Eur/year
  double h = 80.0;             // linear abatement cost, Eur/ton
  double c11 = 0.01, c12 = 3.0;  // fossil capital cost coefficients
  double c21 = 0.02, c22 = 4.0;  // green capital cost coefficients
  double lambda = 7.5e-5;      // terminal penalty, Eur/ton^2
  double atilde = 0.1;         // allowance rate (constant default 0.5/T), Gtons/year
  double T = 5.0;              // horizon, years
  double kappa0 = 30.0;        // initial capital
  double E0 = 4.0;             // initial BAU emission level, Gtons
  double A0_permits = 0.1;     // initial allowance allocation, Gtons
  // Optional node-sampled allowance schedule; empty means constant atilde.
  Eigen::VectorXd atilde_schedule;

  double x_tilde0() const { return A0_permits - E0; }

  /// Throws ValidationError when a parameter constraint is violated.
  void validate() const;
};

struct Controls {
  double Kf = 0.0;     // fossil capital input
  double Kg = 0.0;     // green capital input
  double alpha = 0.0;  // abatement rate, Gtons/year
  double beta = 0.0;   // trading rate, Gtons/year

  Eigen::Vector4d vec() const { return Eigen::Vector4d(Kf, Kg, alpha, beta); }
  static Controls from_vec(const Eigen::VectorXd& v) {
    return Controls{v(0), v(1), v(2), v(3)};
  }
};

enum class CostMode { NE, LQ };

/// Assembles the 2-state / 4-control problem data. The exogenous variant
/// requires a permit price schedule (one value per grid node) entering the
/// fourth slot of r(s); the endogenous variant forbids one and fills the
/// market coupling blocks instead.
GeneralLQSpec build_spec(const CarbonParams& params, const TimeGrid& grid,
                         Variant variant,
                         const Eigen::VectorXd* price_schedule = nullptr);

struct Wellposedness {
  double cond1 = 0.0;
  double cond2 = 0.0;
  bool pass = false;
};

/// Parameter condition for existence of the endogenous-price equilibrium.
Wellposedness check_wellposedness(const CarbonParams& params);

/// Linear inverse demand at own capital k and population mean capital kbar.
double inverse_demand(double k, double kbar, const CarbonParams& params);

/// Adjoint-to-control coupling. The exogenous variant needs the permit
/// price; the endogenous one the conditional-mean adjoint.
Controls coupling_controls(const Eigen::Vector2d& y, const Eigen::Vector2d& ybar,
                           std::optional<double> omega, const CarbonParams& params,
                           Variant variant);

/// Instantaneous cost rate in Eur/year. NE mode books revenue on own
/// output, LQ mode on the conditional-mean output.
double running_cost(const Eigen::Vector2d& x, const Eigen::Vector2d& xbar,
                    const Controls& v, double omega, const CarbonParams& params,
                    CostMode mode);

}  // namespace carbonmkt
