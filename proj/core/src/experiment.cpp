#include "carbonmkt/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "carbonmkt/csv.hpp"
#include "carbonmkt/errors.hpp"

namespace fs = std::filesystem;

namespace carbonmkt {

const std::vector<std::string> kEnsembleQuantities = {
    "K", "Xtilde", "Kf", "Kg", "alpha", "beta", "Y1", "Y2", "omega"};

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    std::ostringstream os;
    os << "config line " << line << ": not a number: '" << v << "'";
    throw ParseError(os.str());
  }
}

long long parse_int(const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    std::ostringstream os;
    os << "config line " << line << ": not an integer: '" << v << "'";
    throw ParseError(os.str());
  }
}

std::uint64_t parse_u64(const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    std::ostringstream os;
    os << "config line " << line << ": not an unsigned integer: '" << v << "'";
    throw ParseError(os.str());
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  if (!out.empty() && out.back().empty()) out.pop_back();
  return out;
}

Stat make_stat(const std::vector<double>& samples) {
  Stat st;
  const int m = static_cast<int>(samples.size());
  if (m == 0) return st;
  double acc = 0.0;
  for (double v : samples) acc += v;
  st.mean = acc / m;
  if (m > 1) {
    double sq = 0.0;
    for (double v : samples) sq += (v - st.mean) * (v - st.mean);
    st.half_width = 1.96 * std::sqrt(sq / (m - 1) / m);
  }
  return st;
}

Eigen::VectorXd load_price_schedule(const std::string& path, const TimeGrid& grid) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open price schedule: " + path);
  std::vector<double> vals;
  std::string line;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) vals.push_back(parse_double(tok, ln));
  }
  if (vals.empty()) throw ConfigError("price schedule is empty: " + path);
  Eigen::VectorXd omega(grid.n);
  if (vals.size() == 1) {
    omega.setConstant(vals[0]);
  } else if (static_cast<int>(vals.size()) == grid.n) {
    for (int k = 0; k < grid.n; ++k) omega(k) = vals[k];
  } else {
    std::ostringstream os;
    os << "price schedule " << path << " has " << vals.size() << " values, expected 1 or "
       << grid.n;
    throw ConfigError(os.str());
  }
  return omega;
}

struct Prepared {
  TimeGrid grid;
  GeneralLQSpec spec;
  RiccatiSolution sol;
  ResidualNorms residuals;
  FeedbackGains gains;
  Eigen::VectorXd x0;
  Eigen::VectorXd price;  // exogenous schedule, empty otherwise
};

Prepared prepare(const ScenarioConfig& config) {
  config.params.validate();
  config.sim.validate();
  const Wellposedness wp = check_wellposedness(config.params);
  if (!wp.pass) {
    std::ostringstream os;
    os << "well-posedness condition violated: cond1 = " << wp.cond1
       << ", cond2 = " << wp.cond2 << " (both must be positive)";
    throw ValidationError(os.str());
  }
  Prepared pr;
  pr.grid = TimeGrid::make(config.params.T, config.sim.dt);
  const Eigen::VectorXd* schedule = nullptr;
  if (config.sim.variant == Variant::exogenous) {
    if (config.price_schedule_path.empty())
      throw ConfigError("exogenous variant requires a price_schedule file");
    pr.price = load_price_schedule(config.price_schedule_path, pr.grid);
    schedule = &pr.price;
  }
  pr.spec = build_spec(config.params, pr.grid, config.sim.variant, schedule);
  pr.sol = config.sim.variant == Variant::exogenous ? solve_exogenous(pr.spec, pr.grid)
                                                    : solve_endogenous(pr.spec, pr.grid);
  pr.residuals = residual_norms(pr.sol, pr.spec);
  pr.gains = make_feedback_gains(pr.sol, pr.spec);
  pr.x0 = Eigen::Vector2d(config.params.kappa0, config.params.x_tilde0());
  return pr;
}

}  // namespace

ScenarioConfig parse_config(const std::string& text) {
  ScenarioConfig cfg;
  bool gamma_seen = false;
  std::istringstream is(text);
  std::string line;
  int ln = 0;
  while (std::getline(is, line)) {
    ++ln;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      std::ostringstream os;
      os << "config line " << ln << ": expected 'key = value'";
      throw ParseError(os.str());
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    CarbonParams& p = cfg.params;
    if (key == "kappa_f") p.kappa_f = parse_double(val, ln);
    else if (key == "kappa_g") { p.kappa_g = parse_double(val, ln); cfg.kappa_g_explicit = true; }
    else if (key == "kappa_e") p.kappa_e = parse_double(val, ln);
    else if (key == "delta") p.delta = parse_double(val, ln);
    else if (key == "sigma") p.sigma = parse_double(val, ln);
    else if (key == "sigma1") p.sigma1 = parse_double(val, ln);
    else if (key == "sigma2") p.sigma2 = parse_double(val, ln);
    else if (key == "sigma_tilde2") p.sigma_tilde2 = parse_double(val, ln);
    else if (key == "rho") p.rho = parse_double(val, ln);
    else if (key == "a") p.a = parse_double(val, ln);
    else if (key == "b") p.b = parse_double(val, ln);
    else if (key == "gamma") { p.gamma = parse_double(val, ln); gamma_seen = true; }
    else if (key == "A_k") p.A_k = parse_double(val, ln);
    else if (key == "nu") p.nu = parse_double(val, ln);
    else if (key == "eta") p.eta = parse_double(val, ln);
    else if (key == "h") p.h = parse_double(val, ln);
    else if (key == "c11") p.c11 = parse_double(val, ln);
    else if (key == "c12") p.c12 = parse_double(val, ln);
    else if (key == "c21") p.c21 = parse_double(val, ln);
    else if (key == "c22") p.c22 = parse_double(val, ln);
    else if (key == "lambda") p.lambda = parse_double(val, ln);
    else if (key == "atilde") { p.atilde = parse_double(val, ln); cfg.atilde_explicit = true; }
    else if (key == "T") p.T = parse_double(val, ln);
    else if (key == "kappa0") p.kappa0 = parse_double(val, ln);
    else if (key == "E0") p.E0 = parse_double(val, ln);
    else if (key == "A0") p.A0_permits = parse_double(val, ln);
    else if (key == "dt") cfg.sim.dt = parse_double(val, ln);
    else if (key == "n_common") cfg.sim.n_common = static_cast<int>(parse_int(val, ln));
    else if (key == "n_particles") cfg.sim.n_particles = static_cast<int>(parse_int(val, ln));
    else if (key == "seed") cfg.sim.seed = parse_u64(val, ln);
    else if (key == "variant") {
      if (val != "exogenous" && val != "endogenous") {
        std::ostringstream os;
        os << "config line " << ln << ": variant must be exogenous or endogenous";
        throw ParseError(os.str());
      }
      cfg.sim.variant = variant_from_name(val);
    } else if (key == "out") cfg.out_dir = val;
    else if (key == "sweep_param") cfg.sweep_param = val;
    else if (key == "sweep_values") {
      cfg.sweep_values.clear();
      for (const std::string& tok : split(val, ','))
        cfg.sweep_values.push_back(parse_double(tok, ln));
    } else if (key == "price_schedule") cfg.price_schedule_path = val;
    else if (key == "emit") {
      cfg.emit_riccati = cfg.emit_ensemble = cfg.emit_market = cfg.emit_summary = false;
      for (const std::string& tok : split(val, ',')) {
        if (tok == "riccati") cfg.emit_riccati = true;
        else if (tok == "ensemble") cfg.emit_ensemble = true;
        else if (tok == "market") cfg.emit_market = true;
        else if (tok == "summary") cfg.emit_summary = true;
        else {
          std::ostringstream os;
          os << "config line " << ln << ": unknown emit flag '" << tok << "'";
          throw ParseError(os.str());
        }
      }
    } else {
      std::ostringstream os;
      os << "config line " << ln << ": unknown key '" << key << "'";
      throw ParseError(os.str());
    }
  }
  // Derived defaults resolve after all explicit overrides.
  if (!cfg.kappa_g_explicit && gamma_seen) cfg.params.kappa_g = 3.0 * cfg.params.gamma + 0.2;
  if (!cfg.atilde_explicit) cfg.params.atilde = 0.5 / cfg.params.T;
  cfg.params.validate();
  cfg.sim.validate();
  for (double v : cfg.sweep_values)
    if (!std::isfinite(v)) throw ValidationError("sweep values must be finite");
  return cfg;
}

std::string render_config(const ScenarioConfig& cfg) {
  const CarbonParams& p = cfg.params;
  std::ostringstream os;
  os << "kappa_f = " << fmt(p.kappa_f) << "\n"
     << "kappa_g = " << fmt(p.kappa_g) << "\n"
     << "kappa_e = " << fmt(p.kappa_e) << "\n"
     << "delta = " << fmt(p.delta) << "\n"
     << "sigma = " << fmt(p.sigma) << "\n"
     << "sigma1 = " << fmt(p.sigma1) << "\n"
     << "sigma2 = " << fmt(p.sigma2) << "\n"
     << "sigma_tilde2 = " << fmt(p.sigma_tilde2) << "\n"
     << "rho = " << fmt(p.rho) << "\n"
     << "a = " << fmt(p.a) << "\n"
     << "b = " << fmt(p.b) << "\n"
     << "gamma = " << fmt(p.gamma) << "\n"
     << "A_k = " << fmt(p.A_k) << "\n"
     << "nu = " << fmt(p.nu) << "\n"
     << "eta = " << fmt(p.eta) << "\n"
     << "h = " << fmt(p.h) << "\n"
     << "c11 = " << fmt(p.c11) << "\n"
     << "c12 = " << fmt(p.c12) << "\n"
     << "c21 = " << fmt(p.c21) << "\n"
     << "c22 = " << fmt(p.c22) << "\n"
     << "lambda = " << fmt(p.lambda) << "\n"
     << "atilde = " << fmt(p.atilde) << "\n"
     << "T = " << fmt(p.T) << "\n"
     << "kappa0 = " << fmt(p.kappa0) << "\n"
     << "E0 = " << fmt(p.E0) << "\n"
     << "A0 = " << fmt(p.A0_permits) << "\n"
     << "dt = " << fmt(cfg.sim.dt) << "\n"
     << "n_common = " << cfg.sim.n_common << "\n"
     << "n_particles = " << cfg.sim.n_particles << "\n"
     << "seed = " << cfg.sim.seed << "\n"
     << "variant = " << variant_name(cfg.sim.variant) << "\n"
     << "out = " << cfg.out_dir << "\n";
  std::vector<std::string> flags;
  if (cfg.emit_riccati) flags.push_back("riccati");
  if (cfg.emit_ensemble) flags.push_back("ensemble");
  if (cfg.emit_market) flags.push_back("market");
  if (cfg.emit_summary) flags.push_back("summary");
  os << "emit = ";
  for (std::size_t i = 0; i < flags.size(); ++i) os << (i ? "," : "") << flags[i];
  os << "\n";
  if (!cfg.sweep_param.empty()) os << "sweep_param = " << cfg.sweep_param << "\n";
  if (!cfg.sweep_values.empty()) {
    os << "sweep_values = ";
    for (std::size_t i = 0; i < cfg.sweep_values.size(); ++i)
      os << (i ? "," : "") << fmt(cfg.sweep_values[i]);
    os << "\n";
  }
  if (!cfg.price_schedule_path.empty())
    os << "price_schedule = " << cfg.price_schedule_path << "\n";
  return os.str();
}

RunResult simulate_scenario(const ScenarioConfig& config) {
  const Prepared pr = prepare(config);
  const CarbonParams& p = config.params;
  const TimeGrid& grid = pr.grid;
  const int n = grid.n;
  const int M = config.sim.n_common;
  const int nq = static_cast<int>(kEnsembleQuantities.size());

  RunResult rr;
  rr.sol = pr.sol;
  rr.residuals = pr.residuals;
  rr.node_mean = Eigen::MatrixXd::Zero(nq, n);
  rr.node_std = Eigen::MatrixXd::Zero(nq, n);

  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(nq, n);
  Eigen::MatrixXd sumsq = Eigen::MatrixXd::Zero(nq, n);

  std::vector<double> s_prod, s_goods, s_permit, s_abate, s_trade, s_kf, s_kg, s_term,
      s_jne, s_jlq, s_ksq;
  Eigen::VectorXd work(n);

  for (int m = 0; m < M; ++m) {
    const Eigen::MatrixXd common = common_increments(config.sim.seed, grid, m, pr.spec.d0);
    const Eigen::MatrixXd xbar =
        simulate_mean_path(pr.sol, pr.spec, pr.gains, pr.x0, common);
    Eigen::VectorXd omega;
    if (config.sim.variant == Variant::endogenous)
      omega = equilibrium_price(pr.sol, xbar);
    else
      omega = pr.price;

    NoiseBundle nb;
    nb.common = common;
    nb.idio.reserve(config.sim.n_particles);
    for (int i = 0; i < config.sim.n_particles; ++i)
      nb.idio.push_back(idio_increments(config.sim.seed, grid, m, i, pr.spec.d1));
    PathEnsemble ens = simulate_particles(pr.sol, pr.spec, pr.gains, xbar, nb, pr.x0);
    reconstruct_adjoint(pr.sol, ens);

    const int N = static_cast<int>(ens.X.size());
    double prod = 0, goods = 0, abate = 0, trade = 0, kf = 0, kg = 0, term = 0;
    for (int i = 0; i < N; ++i) {
      const Eigen::MatrixXd& X = ens.X[i];
      const Eigen::MatrixXd& V = ens.V[i];
      const Eigen::MatrixXd& Y = ens.Y[i];
      work = p.A_k * X.row(0).transpose();
      prod += trapezoid(work, grid.dt);
      for (int k = 0; k < n; ++k) work(k) = inverse_demand(X(0, k), xbar(0, k), p);
      goods += trapezoid(work, grid.dt);
      work = V.row(2).transpose();
      abate += trapezoid(work, grid.dt);
      work = V.row(3).transpose();
      trade += trapezoid(work, grid.dt);
      work = V.row(0).transpose();
      kf += trapezoid(work, grid.dt);
      work = V.row(1).transpose();
      kg += trapezoid(work, grid.dt);
      term += p.lambda * X(1, n - 1) * X(1, n - 1);
      for (int k = 0; k < n; ++k) {
        const double q[8] = {X(0, k), X(1, k), V(0, k), V(1, k),
                             V(2, k), V(3, k), Y(0, k), Y(1, k)};
        for (int r = 0; r < 8; ++r) {
          sum(r, k) += q[r];
          sumsq(r, k) += q[r] * q[r];
        }
      }
    }
    s_prod.push_back(prod / N);
    s_goods.push_back(goods / N);
    s_abate.push_back(abate / N);
    s_trade.push_back(trade / N);
    s_kf.push_back(kf / N);
    s_kg.push_back(kg / N);
    s_term.push_back(term / N);
    s_permit.push_back(trapezoid(omega, grid.dt));
    s_jne.push_back(estimate_cost(ens, p, omega, CostMode::NE).mean);
    s_jlq.push_back(estimate_cost(ens, p, omega, CostMode::LQ).mean);
    work = xbar.row(0).transpose().array().square();
    s_ksq.push_back(trapezoid(work, grid.dt));
    for (int k = 0; k < n; ++k) {
      sum(8, k) += omega(k);
      sumsq(8, k) += omega(k) * omega(k);
    }
    rr.mean_paths.push_back(xbar);
    rr.price_paths.push_back(omega);
  }

  const double cnt_particle = static_cast<double>(M) * config.sim.n_particles;
  for (int r = 0; r < nq; ++r) {
    const double cnt = r == 8 ? static_cast<double>(M) : cnt_particle;
    for (int k = 0; k < n; ++k) {
      const double mu = sum(r, k) / cnt;
      rr.node_mean(r, k) = mu;
      rr.node_std(r, k) = std::sqrt(std::max(0.0, sumsq(r, k) / cnt - mu * mu));
    }
  }

  SummaryRow& row = rr.summary;
  row.production = make_stat(s_prod);
  row.goods_price = make_stat(s_goods);
  row.permit_price = make_stat(s_permit);
  row.abatement = make_stat(s_abate);
  row.trading = make_stat(s_trade);
  row.kf = make_stat(s_kf);
  row.kg = make_stat(s_kg);
  row.terminal_penalty = make_stat(s_term);
  row.j_ne = make_stat(s_jne);
  row.j_lq = make_stat(s_jlq);
  const Stat ksq = make_stat(s_ksq);
  const double scale = 0.5 * p.b * p.gamma * p.A_k * p.A_k;
  row.poa = Stat{scale * ksq.mean, scale * ksq.half_width};
  return rr;
}

SummaryRow run_scenario(const ScenarioConfig& config) {
  fs::create_directories(config.out_dir);
  RunResult rr = simulate_scenario(config);

  {
    std::ofstream mf = csv::open(config.out_dir + "/manifest.txt");
    mf << render_config(config);
    mf << "# grid: T = " << fmt(config.params.T) << ", dt = " << fmt(config.sim.dt)
       << ", nodes = " << rr.sol.grid.n << "\n";
    mf << "# residuals: resP = " << fmt(rr.residuals.resP)
       << ", resPi = " << fmt(rr.residuals.resPi)
       << ", resPhi = " << fmt(rr.residuals.resPhi) << "\n";
  }
  if (config.emit_riccati) {
    std::ofstream os = csv::open(config.out_dir + "/riccati.csv");
    write_riccati_csv(rr.sol, os);
  }
  if (config.emit_ensemble) {
    std::ofstream os = csv::open(config.out_dir + "/ensemble.csv");
    os << "t";
    for (const std::string& q : kEnsembleQuantities) os << "," << q << "_mean," << q << "_std";
    os << "\n";
    for (int k = 0; k < rr.sol.grid.n; ++k) {
      std::vector<std::string> cells{csv::num(rr.sol.grid.t(k))};
      for (int r = 0; r < rr.node_mean.rows(); ++r) {
        cells.push_back(csv::num(rr.node_mean(r, k)));
        cells.push_back(csv::num(rr.node_std(r, k)));
      }
      csv::write_row(os, cells);
    }
  }
  if (config.emit_market) {
    std::ofstream os = csv::open(config.out_dir + "/market.csv");
    os << "t,omega_mean,omega_std\n";
    const int r = 8;  // omega row
    for (int k = 0; k < rr.sol.grid.n; ++k)
      csv::write_row(os, {csv::num(rr.sol.grid.t(k)), csv::num(rr.node_mean(r, k)),
                          csv::num(rr.node_std(r, k))});
  }
  if (config.emit_summary) {
    std::ofstream os = csv::open(config.out_dir + "/summary.csv");
    write_summary_csv({rr.summary}, config.sweep_param, os);
  }
  return rr.summary;
}

namespace {

ScenarioConfig apply_sweep_value(const ScenarioConfig& base, double v) {
  ScenarioConfig cfg = base;
  const std::string& param = base.sweep_param;
  if (param == "atilde") {
    cfg.params.atilde = v;
    cfg.atilde_explicit = true;
  } else if (param == "lambda") {
    cfg.params.lambda = v;
  } else if (param == "gamma") {
    cfg.params.gamma = v;
    if (!cfg.kappa_g_explicit) cfg.params.kappa_g = 3.0 * v + 0.2;
  } else if (param == "nu") {
    cfg.params.nu = v;
  } else if (param == "eta") {
    cfg.params.eta = v;
  } else {
    throw ConfigError("unsupported sweep parameter: " + param);
  }
  return cfg;
}

}  // namespace

std::vector<SummaryRow> sweep(const ScenarioConfig& config) {
  if (config.sweep_param.empty() || config.sweep_values.empty())
    throw ConfigError("sweep requires sweep_param and a nonempty sweep_values list");
  std::vector<SummaryRow> rows;
  for (std::size_t i = 0; i < config.sweep_values.size(); ++i) {
    const double v = config.sweep_values[i];
    ScenarioConfig cfg = apply_sweep_value(config, v);
    std::ostringstream sub;
    sub << config.out_dir << "/" << config.sweep_param << "_" << i;
    cfg.out_dir = sub.str();
    SummaryRow row = run_scenario(cfg);
    row.sweep_value = v;
    rows.push_back(row);
  }
  fs::create_directories(config.out_dir);
  std::ofstream os = csv::open(config.out_dir + "/summary.csv");
  write_summary_csv(rows, config.sweep_param, os);
  return rows;
}

ClearingStats clearing_study(const ScenarioConfig& config, const std::vector<int>& Ns) {
  if (config.sim.variant != Variant::endogenous)
    throw ConfigError("clearing study requires the endogenous variant");
  for (int N : Ns)
    if (N < 1) throw ConfigError("clearing study: particle counts must be positive");
  const Prepared pr = prepare(config);
  const TimeGrid& grid = pr.grid;
  const int n = grid.n;
  const int M = config.sim.n_common;
  const double nu = config.params.nu;

  std::vector<int> probes;
  std::vector<double> times;
  for (int i = 1; i <= 5; ++i) {
    const int k = static_cast<int>(std::llround(i * (n - 1) / 6.0));
    probes.push_back(k);
    times.push_back(grid.t(k));
  }
  const int np = static_cast<int>(probes.size());

  // All particle counts share one set of common paths, and particle i's
  // idiosyncratic stream is the same for every N containing it, so the
  // running sum over particles yields each N-level residual in one pass.
  const int max_n = *std::max_element(Ns.begin(), Ns.end());
  std::map<int, std::vector<std::size_t>> at_count;  // N -> indices in Ns
  for (std::size_t i = 0; i < Ns.size(); ++i) at_count[Ns[i]].push_back(i);

  std::vector<Eigen::MatrixXd> residuals(Ns.size(), Eigen::MatrixXd::Zero(M, np));
  const int chunk = 200;
  for (int m = 0; m < M; ++m) {
    const Eigen::MatrixXd common = common_increments(config.sim.seed, grid, m, pr.spec.d0);
    const Eigen::MatrixXd xbar =
        simulate_mean_path(pr.sol, pr.spec, pr.gains, pr.x0, common);
    // Accumulate per-particle trading rates beta_i = -2 nu [P (X_i - xbar)]_2
    // so that with zero idiosyncratic noise every term, and hence the
    // residual (1/N) sum beta_i, is exactly zero.
    Eigen::VectorXd sumb = Eigen::VectorXd::Zero(np);
    int done = 0;
    while (done < max_n) {
      const int batch = std::min(chunk, max_n - done);
      NoiseBundle nb;
      nb.common = common;
      nb.idio.reserve(batch);
      for (int i = 0; i < batch; ++i)
        nb.idio.push_back(idio_increments(config.sim.seed, grid, m, done + i, pr.spec.d1));
      const PathEnsemble ens =
          simulate_particles(pr.sol, pr.spec, pr.gains, xbar, nb, pr.x0);
      for (int i = 0; i < batch; ++i) {
        for (int j = 0; j < np; ++j) {
          const int k = probes[j];
          sumb(j) += -2.0 * nu *
                     (pr.sol.P[k].row(1) * (ens.X[i].col(k) - xbar.col(k)))(0);
        }
        const auto hit = at_count.find(done + i + 1);
        if (hit != at_count.end()) {
          const int N = hit->first;
          for (int j = 0; j < np; ++j)
            for (std::size_t idx : hit->second) residuals[idx](m, j) = sumb(j) / N;
        }
      }
      done += batch;
    }
  }

  ClearingStats st = clearing_residual(Ns, times, residuals);
  if (config.emit_market) {
    fs::create_directories(config.out_dir);
    std::ofstream os = csv::open(config.out_dir + "/clearing.csv");
    write_clearing_csv(st, os);
  }
  return st;
}

OptimalityCheck optimality_study(const ScenarioConfig& config, double eps) {
  const Prepared pr = prepare(config);
  const TimeGrid& grid = pr.grid;
  const int M = config.sim.n_common;

  OptimalityCheck oc;
  for (int c = 0; c < pr.spec.d2; ++c)
    for (double s : {1.0, -1.0}) {
      Eigen::VectorXd off = Eigen::VectorXd::Zero(pr.spec.d2);
      off(c) = s * eps;
      oc.offsets.push_back(off);
    }
  const int np = static_cast<int>(oc.offsets.size());
  std::vector<std::vector<double>> gaps(np);
  std::vector<double> base;

  for (int m = 0; m < M; ++m) {
    const NoiseBundle nb =
        generate_noise(config.sim, grid, m, pr.spec.d0, pr.spec.d1);
    const Eigen::MatrixXd xbar =
        simulate_mean_path(pr.sol, pr.spec, pr.gains, pr.x0, nb.common);
    Eigen::VectorXd omega;
    if (config.sim.variant == Variant::endogenous)
      omega = equilibrium_price(pr.sol, xbar);
    else
      omega = pr.price;
    const PathEnsemble ens0 =
        simulate_particles(pr.sol, pr.spec, pr.gains, xbar, nb, pr.x0);
    const double j0 = estimate_cost(ens0, config.params, omega, CostMode::NE).mean;
    base.push_back(j0);
    for (int pidx = 0; pidx < np; ++pidx) {
      const PathEnsemble ens = simulate_particles(pr.sol, pr.spec, pr.gains, xbar, nb,
                                                  pr.x0, &oc.offsets[pidx]);
      const double j = estimate_cost(ens, config.params, omega, CostMode::NE).mean;
      gaps[pidx].push_back(j - j0);
    }
  }

  oc.base_cost = make_stat(base).mean;
  oc.cost_gap.resize(np);
  oc.gap_stderr.resize(np);
  for (int pidx = 0; pidx < np; ++pidx) {
    const Stat st = make_stat(gaps[pidx]);
    oc.cost_gap[pidx] = st.mean;
    oc.gap_stderr[pidx] = st.half_width / 1.96;
  }
  return oc;
}

void write_summary_csv(const std::vector<SummaryRow>& rows, const std::string& sweep_param,
                       std::ostream& os) {
  const std::string head = sweep_param.empty() ? "sweep_value" : sweep_param;
  static const char* cols[] = {"production", "goods_price", "permit_price", "abatement",
                               "trading",    "kf",          "kg",           "terminal_penalty",
                               "j_ne",       "j_lq",        "poa"};
  os << head;
  for (const char* c : cols) os << "," << c << "_mean," << c << "_hw";
  os << "\n";
  for (const SummaryRow& row : rows) {
    const Stat* stats[] = {&row.production, &row.goods_price, &row.permit_price,
                           &row.abatement,  &row.trading,     &row.kf,
                           &row.kg,         &row.terminal_penalty, &row.j_ne,
                           &row.j_lq,       &row.poa};
    std::vector<std::string> cells{csv::num(row.sweep_value)};
    for (const Stat* st : stats) {
      cells.push_back(csv::num(st->mean));
      cells.push_back(csv::num(st->half_width));
    }
    csv::write_row(os, cells);
  }
}

}  // namespace carbonmkt
