#pragma once

#include <string>
#include <vector>

#include "carbonmkt/carbon.hpp"
#include "carbonmkt/market.hpp"
#include "carbonmkt/riccati.hpp"
#include "carbonmkt/simulate.hpp"

namespace carbonmkt {

// A fully resolved run description. Built from the line-oriented
// "key = value" config format ('#' starts a comment); unknown keys are
// rejected, missing keys take the baseline defaults, and the derived
// defaults (kappa_g = 3*gamma + 0.2, atilde = 0.5/T) are applied after
// explicit overrides.
struct ScenarioConfig {
  CarbonParams params;
  SimConfig sim;
  std::string sweep_param;            // "", atilde, lambda, gamma, nu or eta
  std::vector<double> sweep_values;
  std::string out_dir = "out";
  std::string price_schedule_path;    // exogenous variant input
  bool emit_riccati = true;
  bool emit_ensemble = true;
  bool emit_market = true;
  bool emit_summary = true;
  // Derived-default bookkeeping: explicit overrides survive sweeps.
  bool kappa_g_explicit = false;
  bool atilde_explicit = false;
};

ScenarioConfig parse_config(const std::string& text);

/// Inverse of parse_config for resolved configs (the run manifest body).
std::string render_config(const ScenarioConfig& config);

struct Stat {
  double mean = 0.0;
  double half_width = 0.0;
};

struct SummaryRow {
  double sweep_value = 0.0;
  Stat production;        // E[int A_k K dt]
  Stat goods_price;       // E[int p dt]
  Stat permit_price;      // E[int omega dt]
  Stat abatement;         // E[int alpha dt]
  Stat trading;           // E[int beta dt]
  Stat kf;                // E[int Kf dt]
  Stat kg;                // E[int Kg dt]
  Stat terminal_penalty;  // E[lambda Xtilde(T)^2]
  Stat j_ne;
  Stat j_lq;
  Stat poa;
};

/// Monte Carlo results of one scenario, no file output.
struct RunResult {
  RiccatiSolution sol;
  ResidualNorms residuals;
  SummaryRow summary;
  // Per-node ensemble statistics; rows are K, Xtilde, Kf, Kg, alpha, beta,
  // Y1, Y2, omega.
  Eigen::MatrixXd node_mean, node_std;
  std::vector<Eigen::MatrixXd> mean_paths;  // one per common path
  std::vector<Eigen::VectorXd> price_paths;
};

extern const std::vector<std::string> kEnsembleQuantities;

RunResult simulate_scenario(const ScenarioConfig& config);

/// Full pipeline: well-posedness gate, Riccati solve, simulation, CSV and
/// manifest emission into config.out_dir.
SummaryRow run_scenario(const ScenarioConfig& config);

/// One run per sweep value with a shared seed; per-value outputs go to
/// subdirectories and the merged table to out_dir/summary.csv.
std::vector<SummaryRow> sweep(const ScenarioConfig& config);

/// Market-clearing decay study across particle counts, reusing one set of
/// common paths; writes out_dir/clearing.csv when emit_market is set.
ClearingStats clearing_study(const ScenarioConfig& config, const std::vector<int>& Ns);

/// Paired common-random-number comparison of the optimal feedback against
/// constant control offsets of +-eps per component.
struct OptimalityCheck {
  double base_cost = 0.0;
  std::vector<Eigen::VectorXd> offsets;
  std::vector<double> cost_gap;      // perturbed minus base, path-mean
  std::vector<double> gap_stderr;    // clustered by common path
};
OptimalityCheck optimality_study(const ScenarioConfig& config, double eps = 0.05);

void write_summary_csv(const std::vector<SummaryRow>& rows, const std::string& sweep_param,
                       std::ostream& os);

}  // namespace carbonmkt
