#pragma once

#include <Eigen/Dense>

#include "carbonmkt/carbon.hpp"
#include "carbonmkt/lq_spec.hpp"
#include "carbonmkt/riccati.hpp"
#include "carbonmkt/time_grid.hpp"

namespace testutil {

using namespace carbonmkt;

inline CarbonParams table2() { return CarbonParams{}; }

inline TimeGrid grid(double T = 5.0, double dt = 1e-2) { return TimeGrid::make(T, dt); }

inline GeneralLQSpec carbon_endogenous(const CarbonParams& p, const TimeGrid& g) {
  return build_spec(p, g, Variant::endogenous);
}

inline GeneralLQSpec carbon_exogenous(const CarbonParams& p, const TimeGrid& g,
                                      Eigen::VectorXd& price, double omega = 0.0) {
  price = Eigen::VectorXd::Constant(g.n, omega);
  return build_spec(p, g, Variant::exogenous, &price);
}

// Scalar problem dP/dt = -(2aP + q - P^2 b^2 / r), P(T) = h, no mean-field
// terms; used as a brute-force oracle target.
struct ScalarRiccati {
  double a = 0.0, b = 1.0, q = 1.0, r = 1.0, h = 1.0;

  double rhs(double P) const { return P * b * b / r * P - q - 2.0 * a * P; }

  // Fine-step midpoint integration backward from T to 0.
  double brute_force_at0(double T, double dt) const {
    double P = h;
    const long long steps = static_cast<long long>(T / dt + 0.5);
    for (long long k = 0; k < steps; ++k) {
      const double k1 = rhs(P);
      const double pm = P - 0.5 * dt * k1;
      P -= dt * rhs(pm);
    }
    return P;
  }
};

inline GeneralLQSpec scalar_spec(const ScalarRiccati& s, const TimeGrid& g) {
  GeneralLQSpec spec = GeneralLQSpec::zero(1, 1, 1, 1, g);
  spec.A(0, 0) = s.a;
  spec.B(0, 0) = s.b;
  spec.Q(0, 0) = s.q;
  spec.R(0, 0) = s.r;
  spec.H(0, 0) = s.h;
  return spec;
}

inline double sup_diff(const std::vector<Eigen::MatrixXd>& a,
                       const std::vector<Eigen::MatrixXd>& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    m = std::max(m, (a[k] - b[k]).cwiseAbs().maxCoeff());
  return m;
}

inline double sup_diff(const std::vector<Eigen::VectorXd>& a,
                       const std::vector<Eigen::VectorXd>& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    m = std::max(m, (a[k] - b[k]).cwiseAbs().maxCoeff());
  return m;
}

}  // namespace testutil
