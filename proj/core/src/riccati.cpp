#include "carbonmkt/riccati.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>

namespace carbonmkt {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::exogenous: return "exogenous";
    case Variant::endogenous: return "endogenous";
    case Variant::general_mfc: return "general-mfc";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  if (name == "exogenous") return Variant::exogenous;
  if (name == "endogenous") return Variant::endogenous;
  if (name == "general-mfc" || name == "general") return Variant::general_mfc;
  throw ConfigError("unknown variant: " + name);
}

namespace {

double cond_number(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  if (smin == 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / smin;
}

Eigen::MatrixXd checked_inverse(const Eigen::MatrixXd& m, const char* name, double t) {
  if (cond_number(m) > 1e12) {
    std::ostringstream os;
    os << name << " numerically singular at t = " << t;
    throw SingularityError(os.str());
  }
  return m.inverse();
}

void check_finite(const Eigen::MatrixXd& m, const char* what, int node) {
  if (!m.allFinite()) {
    std::ostringstream os;
    os << what << " diverged (non-finite entries) at node " << node;
    throw DivergenceError(os.str());
  }
}

Eigen::MatrixXd sym(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

// Linear interpolation between stored nodes of a solution schedule.
template <typename Seq>
auto interp(const Seq& vals, const TimeGrid& grid, double t) {
  if (t < -1e-12 || t > grid.T + 1e-12)
    throw RangeError("solution query outside [0, T]");
  const int exact = grid.node_of(t);
  if (exact >= 0) return vals[exact].eval();
  double s = t / grid.dt;
  int k = static_cast<int>(std::floor(s));
  if (k < 0) k = 0;
  if (k >= grid.n - 1) k = grid.n - 2;
  const double theta = s - k;
  return ((1.0 - theta) * vals[k] + theta * vals[k + 1]).eval();
}

// Right-hand sides (dM/dt) of the paper-specialized system. The exogenous
// and endogenous variants share this code path; they differ only in the
// market coupling matrix (zero vs Dmkt) and in the control-cost vector
// (the r schedule vs the constant rtilde).
struct PaperOps {
  const GeneralLQSpec& spec;
  Eigen::MatrixXd Rinv, BRinv, Kp, BtD, Kpi;
  bool use_rtilde = false;

  PaperOps(const GeneralLQSpec& s, const Eigen::MatrixXd& Dm, bool rtilde_mode)
      : spec(s), use_rtilde(rtilde_mode) {
    Rinv = checked_inverse(s.R, "R", 0.0);
    BRinv = s.B * Rinv;
    Kp = BRinv * s.B.transpose();
    BtD = s.B.transpose() + Dm;
    Kpi = BRinv * BtD;
  }

  Eigen::MatrixXd cPc(const Eigen::MatrixXd& P) const {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(spec.d, spec.d);
    for (const auto& Cj : spec.C) acc += Cj.transpose() * P * Cj;
    return acc;
  }

  Eigen::MatrixXd fP(const Eigen::MatrixXd& P) const {
    return P * Kp * P - cPc(P) - spec.Q - P * spec.A - spec.A.transpose() * P;
  }

  Eigen::MatrixXd fPi(const Eigen::MatrixXd& Pi, const Eigen::MatrixXd& Pt) const {
    return Pi * Kpi * Pi - cPc(Pt) - spec.Q - spec.Qbar - Pi * spec.A -
           spec.A.transpose() * Pi;
  }

  Eigen::VectorXd rvec(double t) const {
    if (use_rtilde) return spec.rtilde;
    return schedule_at(spec.r, spec.grid, t);
  }

  Eigen::VectorXd fphi(const Eigen::VectorXd& phi, const Eigen::MatrixXd& Pit,
                       double t) const {
    return Pit * BRinv * (rvec(t) + BtD * phi) -
           schedule_at(spec.q, spec.grid, t) -
           Pit * schedule_at(spec.A0, spec.grid, t) - spec.A.transpose() * phi;
  }
};

// Right-hand sides of the general-coefficient system.
struct GeneralOps {
  const GeneralLQSpec& spec;
  Eigen::MatrixXd Ah, Bh, Sh, Rh;
  std::vector<Eigen::MatrixXd> Ch, Dh, Fh, Gh;

  explicit GeneralOps(const GeneralLQSpec& s) : spec(s) {
    Ah = s.A + s.Abar;
    Bh = s.B + s.Bbar;
    Sh = s.S + s.Sbar;
    Rh = s.R + s.Rbar;
    for (int j = 0; j < s.d1; ++j) {
      Ch.push_back(s.C[j] + s.Cbar[j]);
      Dh.push_back(s.D[j] + s.Dbar[j]);
    }
    for (int l = 0; l < s.d0; ++l) {
      Fh.push_back(s.F[l] + s.Fbar[l]);
      Gh.push_back(s.G[l] + s.Gbar[l]);
    }
  }

  void blocks0(const Eigen::MatrixXd& P, Eigen::MatrixXd& Sigma0,
               Eigen::MatrixXd& Lambda0, Eigen::MatrixXd& U0) const {
    Sigma0 = spec.R;
    Lambda0 = spec.B.transpose() * P + spec.S;
    U0 = P * spec.B + spec.S.transpose();
    for (int j = 0; j < spec.d1; ++j) {
      Sigma0 += spec.D[j].transpose() * P * spec.D[j];
      Lambda0 += spec.D[j].transpose() * P * spec.C[j];
      U0 += spec.C[j].transpose() * P * spec.D[j];
    }
    for (int l = 0; l < spec.d0; ++l) {
      Sigma0 += spec.G[l].transpose() * P * spec.G[l];
      Lambda0 += spec.G[l].transpose() * P * spec.F[l];
      U0 += spec.F[l].transpose() * P * spec.G[l];
    }
  }

  void blocks1(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Pi,
               Eigen::MatrixXd& Sigma1, Eigen::MatrixXd& Lambda1,
               Eigen::MatrixXd& U1) const {
    Sigma1 = Rh;
    Lambda1 = Bh.transpose() * Pi + Sh;
    U1 = Pi * Bh + Sh.transpose();
    for (int j = 0; j < spec.d1; ++j) {
      Sigma1 += Dh[j].transpose() * P * Dh[j];
      Lambda1 += Dh[j].transpose() * P * Ch[j];
      U1 += Ch[j].transpose() * P * Dh[j];
    }
    for (int l = 0; l < spec.d0; ++l) {
      Sigma1 += Gh[l].transpose() * Pi * Gh[l];
      Lambda1 += Gh[l].transpose() * Pi * Fh[l];
      U1 += Fh[l].transpose() * Pi * Gh[l];
    }
  }

  Eigen::MatrixXd fP(const Eigen::MatrixXd& P, double t, bool check) const {
    Eigen::MatrixXd Sigma0, Lambda0, U0;
    blocks0(P, Sigma0, Lambda0, U0);
    const Eigen::MatrixXd Sinv =
        check ? checked_inverse(Sigma0, "Sigma0", t) : Eigen::MatrixXd(Sigma0.inverse());
    Eigen::MatrixXd lin = P * spec.A + spec.A.transpose() * P + spec.Q;
    for (int j = 0; j < spec.d1; ++j)
      lin += spec.C[j].transpose() * P * spec.C[j];
    for (int l = 0; l < spec.d0; ++l)
      lin += spec.F[l].transpose() * P * spec.F[l];
    return U0 * Sinv * Lambda0 - lin;
  }

  Eigen::MatrixXd fPi(const Eigen::MatrixXd& Pi, const Eigen::MatrixXd& Pt, double t,
                      bool check) const {
    Eigen::MatrixXd Sigma1, Lambda1, U1;
    blocks1(Pt, Pi, Sigma1, Lambda1, U1);
    const Eigen::MatrixXd Sinv =
        check ? checked_inverse(Sigma1, "Sigma1", t) : Eigen::MatrixXd(Sigma1.inverse());
    Eigen::MatrixXd lin = Pi * Ah + Ah.transpose() * Pi + spec.Q + spec.Qbar;
    for (int j = 0; j < spec.d1; ++j) lin += Ch[j].transpose() * Pt * Ch[j];
    for (int l = 0; l < spec.d0; ++l) lin += Fh[l].transpose() * Pi * Fh[l];
    return U1 * Sinv * Lambda1 - lin;
  }

  // Common-noise-weighted affine term entering both the mean control and
  // the phi ODE.
  Eigen::VectorXd rho_terms(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Pi,
                            const Eigen::VectorXd& phi, double t) const {
    Eigen::VectorXd rho = schedule_at(spec.r, spec.grid, t) +
                          schedule_at(spec.rbar, spec.grid, t) + Bh.transpose() * phi;
    for (int j = 0; j < spec.d1; ++j)
      rho += Dh[j].transpose() * P * schedule_at(spec.C0[j], spec.grid, t);
    for (int l = 0; l < spec.d0; ++l)
      rho += Gh[l].transpose() * Pi * schedule_at(spec.F0[l], spec.grid, t);
    return rho;
  }

  Eigen::VectorXd fphi(const Eigen::VectorXd& phi, const Eigen::MatrixXd& Pt,
                       const Eigen::MatrixXd& Pit, double t) const {
    Eigen::MatrixXd Sigma1, Lambda1, U1;
    blocks1(Pt, Pit, Sigma1, Lambda1, U1);
    const Eigen::MatrixXd Sinv = Sigma1.inverse();
    Eigen::VectorXd out = U1 * Sinv * rho_terms(Pt, Pit, phi, t);
    out -= Ah.transpose() * phi;
    out -= Pit * schedule_at(spec.A0, spec.grid, t);
    out -= schedule_at(spec.q, spec.grid, t) + schedule_at(spec.qbar, spec.grid, t);
    for (int j = 0; j < spec.d1; ++j)
      out -= Ch[j].transpose() * Pt * schedule_at(spec.C0[j], spec.grid, t);
    for (int l = 0; l < spec.d0; ++l)
      out -= Fh[l].transpose() * Pit * schedule_at(spec.F0[l], spec.grid, t);
    return out;
  }
};

// One joint backward classical fourth-order step of the coupled
// (P, Pi, phi) system: every stage evaluates all three right-hand sides at
// consistent stage values, which keeps the full cascade at order four.
struct Rk4State {
  Eigen::MatrixXd P, Pi;
  Eigen::VectorXd phi;
};

template <typename FP, typename FPi, typename FPhi>
Rk4State rk4_back_joint(const FP& fP, const FPi& fPi, const FPhi& fphi,
                        const Rk4State& s1, double t1, double dt) {
  const double h = -dt;
  const double tm = t1 + h / 2, t0 = t1 + h;
  auto stage = [&](const Rk4State& s, double t, bool chk) {
    Rk4State k;
    k.P = fP(s.P, t, chk);
    k.Pi = fPi(s.Pi, s.P, t, chk);
    k.phi = fphi(s.phi, s.P, s.Pi, t);
    return k;
  };
  auto advance = [&](const Rk4State& k, double w) {
    return Rk4State{s1.P + w * k.P, s1.Pi + w * k.Pi, s1.phi + w * k.phi};
  };
  const Rk4State k1 = stage(s1, t1, true);
  const Rk4State k2 = stage(advance(k1, h / 2), tm, false);
  const Rk4State k3 = stage(advance(k2, h / 2), tm, false);
  const Rk4State k4 = stage(advance(k3, h), t0, false);
  Rk4State out;
  out.P = s1.P + (h / 6) * (k1.P + 2 * k2.P + 2 * k3.P + k4.P);
  out.Pi = s1.Pi + (h / 6) * (k1.Pi + 2 * k2.Pi + 2 * k3.Pi + k4.Pi);
  out.phi = s1.phi + (h / 6) * (k1.phi + 2 * k2.phi + 2 * k3.phi + k4.phi);
  return out;
}

RiccatiSolution solve_paper(const GeneralLQSpec& spec, const TimeGrid& grid,
                            const Eigen::MatrixXd& Dm, bool use_rtilde,
                            Variant variant) {
  spec.ensure_wellformed();
  PaperOps ops(spec, Dm, use_rtilde);
  const int n = grid.n;
  const double dt = grid.dt;
  const bool symmetrize_pi = Dm.isZero(0.0);

  RiccatiSolution sol;
  sol.grid = grid;
  sol.variant = variant;
  sol.P.resize(n);
  sol.Pi.resize(n);
  sol.phi.resize(n);

  sol.P[n - 1] = spec.H;
  sol.Pi[n - 1] = spec.H;
  sol.phi[n - 1] = Eigen::VectorXd::Zero(spec.d);

  auto fP = [&](const Eigen::MatrixXd& P, double, bool) { return ops.fP(P); };
  auto fPi = [&](const Eigen::MatrixXd& Pi, const Eigen::MatrixXd& P, double, bool) {
    return ops.fPi(Pi, P);
  };
  auto fphi = [&](const Eigen::VectorXd& phi, const Eigen::MatrixXd&,
                  const Eigen::MatrixXd& Pi, double t) { return ops.fphi(phi, Pi, t); };

  for (int k = n - 2; k >= 0; --k) {
    const Rk4State s1{sol.P[k + 1], sol.Pi[k + 1], sol.phi[k + 1]};
    Rk4State s0 = rk4_back_joint(fP, fPi, fphi, s1, grid.t(k + 1), dt);
    sol.P[k] = sym(s0.P);
    sol.Pi[k] = symmetrize_pi ? sym(s0.Pi) : std::move(s0.Pi);
    sol.phi[k] = std::move(s0.phi);
    check_finite(sol.P[k], "P", k);
    check_finite(sol.Pi[k], "Pi", k);
    check_finite(sol.phi[k], "phi", k);
  }
  return sol;
}

}  // namespace

RiccatiSolution solve_exogenous(const GeneralLQSpec& spec, const TimeGrid& grid) {
  return solve_paper(spec, grid, Eigen::MatrixXd::Zero(spec.d2, spec.d),
                     /*use_rtilde=*/false, Variant::exogenous);
}

RiccatiSolution solve_endogenous(const GeneralLQSpec& spec, const TimeGrid& grid) {
  return solve_paper(spec, grid, spec.Dmkt, /*use_rtilde=*/true, Variant::endogenous);
}

RiccatiSolution solve_general(const GeneralLQSpec& spec, const TimeGrid& grid) {
  spec.ensure_wellformed();
  GeneralOps ops(spec);
  const int n = grid.n;
  const double dt = grid.dt;

  RiccatiSolution sol;
  sol.grid = grid;
  sol.variant = Variant::general_mfc;
  sol.P.resize(n);
  sol.Pi.resize(n);
  sol.phi.resize(n);

  sol.P[n - 1] = spec.H;
  sol.Pi[n - 1] = spec.H + spec.Hbar;
  sol.phi[n - 1] = Eigen::VectorXd::Zero(spec.d);

  // Condition check once per step on the entry values; sub-stage inverses
  // reuse plain inversion.
  auto fP = [&](const Eigen::MatrixXd& P, double t, bool chk) {
    return ops.fP(P, t, chk);
  };
  auto fPi = [&](const Eigen::MatrixXd& Pi, const Eigen::MatrixXd& P, double t,
                 bool chk) { return ops.fPi(Pi, P, t, chk); };
  auto fphi = [&](const Eigen::VectorXd& phi, const Eigen::MatrixXd& P,
                  const Eigen::MatrixXd& Pi, double t) {
    return ops.fphi(phi, P, Pi, t);
  };

  for (int k = n - 2; k >= 0; --k) {
    const Rk4State s1{sol.P[k + 1], sol.Pi[k + 1], sol.phi[k + 1]};
    Rk4State s0 = rk4_back_joint(fP, fPi, fphi, s1, grid.t(k + 1), dt);
    sol.P[k] = sym(s0.P);
    sol.Pi[k] = sym(s0.Pi);
    sol.phi[k] = std::move(s0.phi);
    check_finite(sol.P[k], "P", k);
    check_finite(sol.Pi[k], "Pi", k);
    check_finite(sol.phi[k], "phi", k);
  }
  return sol;
}

ResidualNorms residual_norms(const RiccatiSolution& sol, const GeneralLQSpec& spec) {
  spec.ensure_wellformed();
  const int n = sol.grid.n;
  if (n < 3) throw StructuralError("residual_norms: need at least three nodes");
  const double dt = sol.grid.dt;

  // Difference quotient of a stored schedule: fourth-order five-point
  // stencils (central on the interior, one-sided near the ends) so the
  // quotient's own truncation error stays well below the solver error;
  // second-order three-point fallback on very short grids.
  auto ddt = [&](const auto& v, int k) {
    if (n < 5) {
      if (k == 0) return ((-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dt)).eval();
      if (k == n - 1)
        return ((3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * dt)).eval();
      return ((v[k + 1] - v[k - 1]) / (2.0 * dt)).eval();
    }
    const double h12 = 12.0 * dt;
    if (k == 0)
      return ((-25.0 * v[0] + 48.0 * v[1] - 36.0 * v[2] + 16.0 * v[3] - 3.0 * v[4]) /
              h12)
          .eval();
    if (k == 1)
      return ((-3.0 * v[0] - 10.0 * v[1] + 18.0 * v[2] - 6.0 * v[3] + v[4]) / h12)
          .eval();
    if (k == n - 2)
      return ((3.0 * v[n - 1] + 10.0 * v[n - 2] - 18.0 * v[n - 3] + 6.0 * v[n - 4] -
               v[n - 5]) /
              h12)
          .eval();
    if (k == n - 1)
      return ((25.0 * v[n - 1] - 48.0 * v[n - 2] + 36.0 * v[n - 3] - 16.0 * v[n - 4] +
               3.0 * v[n - 5]) /
              h12)
          .eval();
    return ((v[k - 2] - 8.0 * v[k - 1] + 8.0 * v[k + 1] - v[k + 2]) / h12).eval();
  };

  std::function<Eigen::MatrixXd(int)> rhsP, rhsPi;
  std::function<Eigen::VectorXd(int)> rhsPhi;
  // Keep the ops objects alive for the lambdas below.
  std::shared_ptr<PaperOps> pops;
  std::shared_ptr<GeneralOps> gops;
  if (sol.variant == Variant::general_mfc) {
    gops = std::make_shared<GeneralOps>(spec);
    rhsP = [&, gops](int k) { return gops->fP(sol.P[k], sol.grid.t(k), false); };
    rhsPi = [&, gops](int k) {
      return gops->fPi(sol.Pi[k], sol.P[k], sol.grid.t(k), false);
    };
    rhsPhi = [&, gops](int k) {
      return gops->fphi(sol.phi[k], sol.P[k], sol.Pi[k], sol.grid.t(k));
    };
  } else {
    const bool endo = sol.variant == Variant::endogenous;
    pops = std::make_shared<PaperOps>(
        spec, endo ? spec.Dmkt : Eigen::MatrixXd::Zero(spec.d2, spec.d).eval(), endo);
    rhsP = [&, pops](int k) { return pops->fP(sol.P[k]); };
    rhsPi = [&, pops](int k) { return pops->fPi(sol.Pi[k], sol.P[k]); };
    rhsPhi = [&, pops](int k) { return pops->fphi(sol.phi[k], sol.Pi[k], sol.grid.t(k)); };
  }

  ResidualNorms res;
  for (int k = 0; k < n; ++k) {
    res.resP = std::max(res.resP, (ddt(sol.P, k) - rhsP(k)).norm());
    res.resPi = std::max(res.resPi, (ddt(sol.Pi, k) - rhsPi(k)).norm());
    res.resPhi = std::max(res.resPhi, (ddt(sol.phi, k) - rhsPhi(k)).norm());
  }
  return res;
}

SigmaLambdaBlocks sigma_lambda(const GeneralLQSpec& spec, const Eigen::MatrixXd& P,
                               const Eigen::MatrixXd& Pi, double /*t*/) {
  if (P.rows() != spec.d || P.cols() != spec.d || Pi.rows() != spec.d ||
      Pi.cols() != spec.d)
    throw StructuralError("sigma_lambda: P and Pi must be d x d");
  GeneralOps ops(spec);
  SigmaLambdaBlocks b;
  Eigen::MatrixXd U0, U1;
  ops.blocks0(P, b.Sigma0, b.Lambda0, U0);
  ops.blocks1(P, Pi, b.Sigma1, b.Lambda1, U1);
  return b;
}

Eigen::VectorXd mean_affine_term(const GeneralLQSpec& spec, const Eigen::MatrixXd& P,
                                 const Eigen::MatrixXd& Pi, const Eigen::VectorXd& phi,
                                 double t) {
  GeneralOps ops(spec);
  return ops.rho_terms(P, Pi, phi, t);
}

Eigen::MatrixXd RiccatiSolution::P_at(double t) const { return interp(P, grid, t); }
Eigen::MatrixXd RiccatiSolution::Pi_at(double t) const { return interp(Pi, grid, t); }
Eigen::VectorXd RiccatiSolution::phi_at(double t) const { return interp(phi, grid, t); }

Eigen::VectorXd feedback_control(const RiccatiSolution& sol, const GeneralLQSpec& spec,
                                 double t, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& xbar) {
  const Eigen::MatrixXd P = sol.P_at(t);
  const Eigen::MatrixXd Pi = sol.Pi_at(t);
  const Eigen::VectorXd phi = sol.phi_at(t);
  switch (sol.variant) {
    case Variant::exogenous: {
      const Eigen::MatrixXd Rinv = checked_inverse(spec.R, "R", t);
      return -Rinv * spec.B.transpose() * P * (x - xbar) -
             Rinv * (spec.B.transpose() * Pi * xbar +
                     schedule_at(spec.r, spec.grid, t) + spec.B.transpose() * phi);
    }
    case Variant::endogenous: {
      const Eigen::MatrixXd Rinv = checked_inverse(spec.R, "R", t);
      const Eigen::MatrixXd BtD = spec.B.transpose() + spec.Dmkt;
      return -Rinv * spec.B.transpose() * P * (x - xbar) -
             Rinv * (BtD * Pi * xbar + BtD * phi + spec.rtilde);
    }
    case Variant::general_mfc: {
      GeneralOps ops(spec);
      SigmaLambdaBlocks b = sigma_lambda(spec, P, Pi, t);
      const Eigen::MatrixXd S0inv = checked_inverse(b.Sigma0, "Sigma0", t);
      const Eigen::MatrixXd S1inv = checked_inverse(b.Sigma1, "Sigma1", t);
      return -S0inv * b.Lambda0 * (x - xbar) -
             S1inv * (b.Lambda1 * xbar + ops.rho_terms(P, Pi, phi, t));
    }
  }
  throw ConfigError("feedback_control: unknown variant");
}

FeedbackGains make_feedback_gains(const RiccatiSolution& sol, const GeneralLQSpec& spec) {
  const int n = sol.grid.n;
  FeedbackGains g;
  g.G1.resize(n);
  g.G2.resize(n);
  g.g3.resize(n);
  if (sol.variant == Variant::general_mfc) {
    GeneralOps ops(spec);
    for (int k = 0; k < n; ++k) {
      const double t = sol.grid.t(k);
      SigmaLambdaBlocks b = sigma_lambda(spec, sol.P[k], sol.Pi[k], t);
      const Eigen::MatrixXd S0inv = checked_inverse(b.Sigma0, "Sigma0", t);
      const Eigen::MatrixXd S1inv = checked_inverse(b.Sigma1, "Sigma1", t);
      g.G1[k] = S0inv * b.Lambda0;
      g.G2[k] = S1inv * b.Lambda1;
      g.g3[k] = S1inv * ops.rho_terms(sol.P[k], sol.Pi[k], sol.phi[k], t);
    }
    return g;
  }
  const Eigen::MatrixXd Rinv = checked_inverse(spec.R, "R", 0.0);
  const Eigen::MatrixXd RinvBt = Rinv * spec.B.transpose();
  const bool endo = sol.variant == Variant::endogenous;
  const Eigen::MatrixXd BtD =
      endo ? (spec.B.transpose() + spec.Dmkt).eval() : spec.B.transpose().eval();
  for (int k = 0; k < n; ++k) {
    const double t = sol.grid.t(k);
    g.G1[k] = RinvBt * sol.P[k];
    g.G2[k] = Rinv * BtD * sol.Pi[k];
    if (endo)
      g.g3[k] = Rinv * (BtD * sol.phi[k] + spec.rtilde);
    else
      g.g3[k] = Rinv * (schedule_at(spec.r, spec.grid, t) + BtD * sol.phi[k]);
  }
  return g;
}

void write_riccati_csv(const RiccatiSolution& sol, std::ostream& os) {
  const int d = static_cast<int>(sol.phi[0].size());
  os << "t";
  for (int i = 1; i <= d; ++i)
    for (int j = 1; j <= d; ++j) os << ",P" << i << j;
  for (int i = 1; i <= d; ++i)
    for (int j = 1; j <= d; ++j) os << ",Pi" << i << j;
  for (int i = 1; i <= d; ++i) os << ",phi" << i;
  os << '\n';
  char buf[40];
  auto put = [&](double x) {
    std::snprintf(buf, sizeof(buf), ",%.17e", x);
    os << buf;
  };
  for (int k = 0; k < sol.grid.n; ++k) {
    std::snprintf(buf, sizeof(buf), "%.17e", sol.grid.t(k));
    os << buf;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) put(sol.P[k](i, j));
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) put(sol.Pi[k](i, j));
    for (int i = 0; i < d; ++i) put(sol.phi[k](i));
    os << '\n';
  }
}

}  // namespace carbonmkt
