#pragma once

#include <Eigen/Dense>
#include <ostream>
#include <vector>

#include "carbonmkt/lq_spec.hpp"
#include "carbonmkt/time_grid.hpp"

namespace carbonmkt {

enum class Variant { exogenous, endogenous, general_mfc };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

/// Backward Riccati solution on a uniform grid. P feeds back on the
/// fluctuation X - Xbar, Pi on the conditional mean, phi is the affine
/// offset. Terminal conditions are assigned, not integrated.
struct RiccatiSolution {
  TimeGrid grid;
  Variant variant = Variant::exogenous;
  std::vector<Eigen::MatrixXd> P;    // d x d per node
  std::vector<Eigen::MatrixXd> Pi;   // d x d per node
  std::vector<Eigen::VectorXd> phi;  // d per node

  Eigen::MatrixXd P_at(double t) const;
  Eigen::MatrixXd Pi_at(double t) const;
  Eigen::VectorXd phi_at(double t) const;
};

struct SigmaLambdaBlocks {
  Eigen::MatrixXd Sigma0, Sigma1;  // d2 x d2
  Eigen::MatrixXd Lambda0, Lambda1;  // d2 x d
};

struct ResidualNorms {
  double resP = 0.0;
  double resPi = 0.0;
  double resPhi = 0.0;
};

/// Paper-specialized solvers (shared integration path; the endogenous one
/// carries the market coupling matrix Dmkt and the schedule-free vector
/// rtilde in place of r).
RiccatiSolution solve_exogenous(const GeneralLQSpec& spec, const TimeGrid& grid);
RiccatiSolution solve_endogenous(const GeneralLQSpec& spec, const TimeGrid& grid);

/// Full general-coefficient solver (all bar terms, S, D, G blocks).
RiccatiSolution solve_general(const GeneralLQSpec& spec, const TimeGrid& grid);

/// Plug-back verification: second-order difference quotients of the stored
/// schedules inserted into the defining ODEs; max norms over the grid.
ResidualNorms residual_norms(const RiccatiSolution& sol, const GeneralLQSpec& spec);

/// The Sigma/Lambda blocks of the general first-order condition at one time.
SigmaLambdaBlocks sigma_lambda(const GeneralLQSpec& spec, const Eigen::MatrixXd& P,
                               const Eigen::MatrixXd& Pi, double t);

/// Affine term of the general mean control: r + rbar + (B+Bbar)^T phi plus
/// the common-noise-weighted schedule contractions.
Eigen::VectorXd mean_affine_term(const GeneralLQSpec& spec, const Eigen::MatrixXd& P,
                                 const Eigen::MatrixXd& Pi, const Eigen::VectorXd& phi,
                                 double t);

/// Optimal feedback at (t, x, xbar); formula chosen by sol.variant.
Eigen::VectorXd feedback_control(const RiccatiSolution& sol, const GeneralLQSpec& spec,
                                 double t, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& xbar);

/// Per-node affine feedback gains, v = -G1 (x - xbar) - G2 xbar - g3,
/// precomputed for the simulation hot loop.
struct FeedbackGains {
  std::vector<Eigen::MatrixXd> G1, G2;  // d2 x d per node
  std::vector<Eigen::VectorXd> g3;      // d2 per node
};
FeedbackGains make_feedback_gains(const RiccatiSolution& sol, const GeneralLQSpec& spec);

/// CSV dump: t, P..., Pi..., phi... one row per node (row-major entries).
void write_riccati_csv(const RiccatiSolution& sol, std::ostream& os);

}  // namespace carbonmkt
