#include "carbonmkt/simulate.hpp"

#include <cmath>
#include <sstream>

#include "carbonmkt/rng.hpp"

namespace carbonmkt {

namespace {

Eigen::MatrixXd increments(std::uint64_t seed, const TimeGrid& grid, std::uint64_t path,
                           std::uint64_t particle, int channels,
                           std::uint64_t channel_base) {
  const int steps = grid.steps();
  const double root_dt = std::sqrt(grid.dt);
  Eigen::MatrixXd dw(channels, steps);
  for (int c = 0; c < channels; ++c)
    for (int k = 0; k < steps; ++k)
      dw(c, k) = root_dt * rng::gaussian(seed, path, particle, channel_base + c, k);
  return dw;
}

void check_state(const Eigen::VectorXd& x, const char* what, int node) {
  if (!x.allFinite()) {
    std::ostringstream os;
    os << what << " diverged (non-finite state) at node " << node;
    throw DivergenceError(os.str());
  }
}

// Schedule columns resampled on a simulation grid (exact when the grids
// coincide).
Eigen::MatrixXd resample(const Eigen::MatrixXd& sched, const TimeGrid& from,
                         const TimeGrid& to) {
  Eigen::MatrixXd out(sched.rows(), to.n);
  for (int k = 0; k < to.n; ++k) out.col(k) = schedule_at(sched, from, to.t(k));
  return out;
}

}  // namespace

Eigen::MatrixXd common_increments(std::uint64_t seed, const TimeGrid& grid,
                                  std::uint64_t path, int d0) {
  return increments(seed, grid, path, rng::kCommonParticle, d0, /*channel_base=*/0);
}

Eigen::MatrixXd idio_increments(std::uint64_t seed, const TimeGrid& grid,
                                std::uint64_t path, std::uint64_t particle, int d1) {
  // Idiosyncratic channels live above the common ones so the two families
  // never collide even with equal counters.
  return increments(seed, grid, path, particle, d1, /*channel_base=*/16);
}

NoiseBundle generate_noise(const SimConfig& config, const TimeGrid& grid,
                           std::uint64_t path, int d0, int d1) {
  config.validate();
  NoiseBundle nb;
  nb.common = common_increments(config.seed, grid, path, d0);
  nb.idio.reserve(config.n_particles);
  for (int i = 0; i < config.n_particles; ++i)
    nb.idio.push_back(idio_increments(config.seed, grid, path, i, d1));
  return nb;
}

Eigen::MatrixXd simulate_mean_path(const RiccatiSolution& sol, const GeneralLQSpec& spec,
                                   const FeedbackGains& gains, const Eigen::VectorXd& x0,
                                   const Eigen::MatrixXd& common) {
  const TimeGrid& grid = sol.grid;
  const int n = grid.n;
  if (common.rows() != spec.d0 || common.cols() != grid.steps())
    throw StructuralError("simulate_mean_path: increment shape mismatch");
  const Eigen::MatrixXd A0s = resample(spec.A0, spec.grid, grid);
  std::vector<Eigen::MatrixXd> F0s;
  for (const auto& f0 : spec.F0) F0s.push_back(resample(f0, spec.grid, grid));

  const Eigen::MatrixXd Ah = spec.A + spec.Abar;
  const Eigen::MatrixXd Bh = spec.B + spec.Bbar;

  std::vector<Eigen::MatrixXd> Fh, Gh;
  for (int l = 0; l < spec.d0; ++l) {
    Fh.push_back(spec.F[l] + spec.Fbar[l]);
    Gh.push_back(spec.G[l] + spec.Gbar[l]);
  }

  // The update mirrors the particle loop operation for operation, so a
  // particle without idiosyncratic diffusion reproduces the mean path
  // bitwise (the market-clearing residual is then exactly zero).
  Eigen::MatrixXd xbar(spec.d, n);
  xbar.col(0) = x0;
  Eigen::VectorXd vbar(spec.d2), next(spec.d), diff(spec.d);
  for (int k = 0; k < n - 1; ++k) {
    const Eigen::VectorXd x = xbar.col(k);
    vbar = -(gains.G2[k] * x) - gains.g3[k];
    next = A0s.col(k);
    next.noalias() += Ah * x;
    next.noalias() += Bh * vbar;
    next *= grid.dt;
    next += x;
    for (int l = 0; l < spec.d0; ++l) {
      diff = F0s[l].col(k);
      if (!Fh[l].isZero(0.0)) diff.noalias() += Fh[l] * x;
      if (!Gh[l].isZero(0.0)) diff.noalias() += Gh[l] * vbar;
      next += diff * common(l, k);
    }
    xbar.col(k + 1) = next;
    check_state(xbar.col(k + 1), "mean path", k + 1);
  }
  return xbar;
}

PathEnsemble simulate_particles(const RiccatiSolution& sol, const GeneralLQSpec& spec,
                                const FeedbackGains& gains, const Eigen::MatrixXd& xbar,
                                const NoiseBundle& noise, const Eigen::VectorXd& x0,
                                const Eigen::VectorXd* v_offset) {
  const TimeGrid& grid = sol.grid;
  const int n = grid.n;
  if (xbar.cols() != n) throw StructuralError("simulate_particles: mean path mismatch");

  const Eigen::MatrixXd A0s = resample(spec.A0, spec.grid, grid);
  std::vector<Eigen::MatrixXd> C0s, F0s;
  for (const auto& c0 : spec.C0) C0s.push_back(resample(c0, spec.grid, grid));
  for (const auto& f0 : spec.F0) F0s.push_back(resample(f0, spec.grid, grid));

  PathEnsemble e;
  e.grid = grid;
  e.xbar = xbar;
  const int N = static_cast<int>(noise.idio.size());
  e.X.resize(N);
  e.V.resize(N);

  // Everything that depends on the mean path only is hoisted out of the
  // particle loop: the mean control, the mean-fed drift offset, and the
  // mean-fed part of every diffusion column.
  Eigen::MatrixXd vbars(spec.d2, n);
  for (int k = 0; k < n; ++k)
    vbars.col(k) = -(gains.G2[k] * xbar.col(k)) - gains.g3[k];

  Eigen::MatrixXd drift0 = A0s;
  if (!spec.Abar.isZero(0.0)) drift0.noalias() += spec.Abar * xbar;
  if (!spec.Bbar.isZero(0.0)) drift0.noalias() += spec.Bbar * vbars;

  std::vector<Eigen::MatrixXd> cpart = C0s, fpart = F0s;
  std::vector<bool> c_on(spec.d1), d_on(spec.d1), f_on(spec.d0), g_on(spec.d0);
  for (int j = 0; j < spec.d1; ++j) {
    if (!spec.Cbar[j].isZero(0.0)) cpart[j].noalias() += spec.Cbar[j] * xbar;
    if (!spec.Dbar[j].isZero(0.0)) cpart[j].noalias() += spec.Dbar[j] * vbars;
    c_on[j] = !spec.C[j].isZero(0.0);
    d_on[j] = !spec.D[j].isZero(0.0);
  }
  for (int l = 0; l < spec.d0; ++l) {
    if (!spec.Fbar[l].isZero(0.0)) fpart[l].noalias() += spec.Fbar[l] * xbar;
    if (!spec.Gbar[l].isZero(0.0)) fpart[l].noalias() += spec.Gbar[l] * vbars;
    f_on[l] = !spec.F[l].isZero(0.0);
    g_on[l] = !spec.G[l].isZero(0.0);
  }

  Eigen::VectorXd dx(spec.d), v(spec.d2), next(spec.d), diff(spec.d);
  for (int i = 0; i < N; ++i) {
    Eigen::MatrixXd X(spec.d, n), V(spec.d2, n);
    X.col(0) = x0;
    for (int k = 0; k < n - 1; ++k) {
      dx = X.col(k) - xbar.col(k);
      v = vbars.col(k);
      v.noalias() -= gains.G1[k] * dx;
      if (v_offset != nullptr) v += *v_offset;
      V.col(k) = v;
      next = drift0.col(k);
      next.noalias() += spec.A * X.col(k);
      next.noalias() += spec.B * v;
      next *= grid.dt;
      next += X.col(k);
      for (int j = 0; j < spec.d1; ++j) {
        diff = cpart[j].col(k);
        if (c_on[j]) diff.noalias() += spec.C[j] * X.col(k);
        if (d_on[j]) diff.noalias() += spec.D[j] * v;
        next += diff * noise.idio[i](j, k);
      }
      for (int l = 0; l < spec.d0; ++l) {
        diff = fpart[l].col(k);
        if (f_on[l]) diff.noalias() += spec.F[l] * X.col(k);
        if (g_on[l]) diff.noalias() += spec.G[l] * v;
        next += diff * noise.common(l, k);
      }
      X.col(k + 1) = next;
      if (!next.allFinite()) check_state(next, "particle path", k + 1);
    }
    // Terminal control, for completeness of the stored path.
    dx = X.col(n - 1) - xbar.col(n - 1);
    V.col(n - 1) = vbars.col(n - 1) - gains.G1[n - 1] * dx;
    if (v_offset != nullptr) V.col(n - 1) += *v_offset;
    e.X[i] = std::move(X);
    e.V[i] = std::move(V);
  }
  return e;
}

void reconstruct_adjoint(const RiccatiSolution& sol, PathEnsemble& e) {
  const int n = e.grid.n;
  const int d = static_cast<int>(e.xbar.rows());
  e.Ybar.resize(d, n);
  for (int k = 0; k < n; ++k)
    e.Ybar.col(k) = sol.Pi[k] * e.xbar.col(k) + sol.phi[k];
  e.Y.resize(e.X.size());
  for (std::size_t i = 0; i < e.X.size(); ++i) {
    e.Y[i].resize(d, n);
    for (int k = 0; k < n; ++k)
      e.Y[i].col(k) = sol.P[k] * (e.X[i].col(k) - e.xbar.col(k)) + e.Ybar.col(k);
  }
}

AdjointDiffusions reconstruct_z(const RiccatiSolution& sol, const GeneralLQSpec& spec,
                                const PathEnsemble& e) {
  const int n = e.grid.n;
  const int N = static_cast<int>(e.X.size());
  AdjointDiffusions ad;
  ad.Z.assign(N, std::vector<Eigen::MatrixXd>(n));
  ad.Z0.assign(N, std::vector<Eigen::MatrixXd>(n));

  std::vector<Eigen::MatrixXd> Ch, Dh, Fh, Gh;
  for (int j = 0; j < spec.d1; ++j) {
    Ch.push_back(spec.C[j] + spec.Cbar[j]);
    Dh.push_back(spec.D[j] + spec.Dbar[j]);
  }
  for (int l = 0; l < spec.d0; ++l) {
    Fh.push_back(spec.F[l] + spec.Fbar[l]);
    Gh.push_back(spec.G[l] + spec.Gbar[l]);
  }

  for (int k = 0; k < n; ++k) {
    const double t = e.grid.t(k);
    const Eigen::MatrixXd& P = sol.P[k];
    const Eigen::MatrixXd& Pi = sol.Pi[k];
    const SigmaLambdaBlocks b = sigma_lambda(spec, P, Pi, t);
    const Eigen::MatrixXd S0inv = b.Sigma0.inverse();
    const Eigen::MatrixXd S1inv = b.Sigma1.inverse();
    const Eigen::VectorXd rho = mean_affine_term(spec, P, Pi, sol.phi[k], t);
    const Eigen::VectorXd xb = e.xbar.col(k);
    const Eigen::VectorXd mean_ctrl_arg = S1inv * (b.Lambda1 * xb + rho);
    for (int i = 0; i < N; ++i) {
      const Eigen::VectorXd dx = e.X[i].col(k) - xb;
      Eigen::MatrixXd Z(spec.d, spec.d1), Z0(spec.d, spec.d0);
      for (int j = 0; j < spec.d1; ++j) {
        Z.col(j) = P * (spec.C[j] * dx - spec.D[j] * (S0inv * (b.Lambda0 * dx))) +
                   P * (schedule_at(spec.C0[j], spec.grid, t) + Ch[j] * xb -
                        Dh[j] * mean_ctrl_arg);
      }
      for (int l = 0; l < spec.d0; ++l) {
        Z0.col(l) = P * (spec.F[l] * dx - spec.G[l] * (S0inv * (b.Lambda0 * dx))) +
                    Pi * (schedule_at(spec.F0[l], spec.grid, t) + Fh[l] * xb -
                          Gh[l] * mean_ctrl_arg);
      }
      ad.Z[i][k] = std::move(Z);
      ad.Z0[i][k] = std::move(Z0);
    }
  }
  return ad;
}

double trapezoid(const Eigen::VectorXd& values, double dt) {
  const int n = static_cast<int>(values.size());
  if (n < 2) return 0.0;
  double acc = 0.5 * (values(0) + values(n - 1));
  for (int k = 1; k < n - 1; ++k) acc += values(k);
  return acc * dt;
}

CostEstimate estimate_cost(const PathEnsemble& e, const CarbonParams& params,
                           const Eigen::VectorXd& omega, CostMode mode) {
  const int n = e.grid.n;
  if (omega.size() != n) throw StructuralError("estimate_cost: price path mismatch");
  const int N = static_cast<int>(e.X.size());
  Eigen::VectorXd totals(N);
  Eigen::VectorXd rate(n);
  for (int i = 0; i < N; ++i) {
    for (int k = 0; k < n; ++k) {
      rate(k) = running_cost(e.X[i].col(k), e.xbar.col(k),
                             Controls::from_vec(e.V[i].col(k)), omega(k), params, mode);
    }
    const double terminal = params.lambda * e.X[i](1, n - 1) * e.X[i](1, n - 1);
    totals(i) = trapezoid(rate, e.grid.dt) + terminal;
  }
  CostEstimate out;
  out.mean = totals.mean();
  if (N > 1) {
    const double var = (totals.array() - out.mean).square().sum() / (N - 1);
    out.half_width = 1.96 * std::sqrt(var / N);
  }
  return out;
}

double price_of_anarchy(const std::vector<Eigen::MatrixXd>& mean_paths,
                        const CarbonParams& params, const TimeGrid& grid) {
  if (mean_paths.empty()) throw StructuralError("price_of_anarchy: no mean paths");
  double acc = 0.0;
  for (const auto& xbar : mean_paths) {
    const Eigen::VectorXd ksq = xbar.row(0).array().square();
    acc += trapezoid(ksq, grid.dt);
  }
  acc /= static_cast<double>(mean_paths.size());
  return 0.5 * params.b * params.gamma * params.A_k * params.A_k * acc;
}

}  // namespace carbonmkt
