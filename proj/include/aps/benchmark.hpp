#pragma once

#include <string>
#include <vector>

#include "aps/error.hpp"
#include "aps/exogenous.hpp"
#include "aps/params.hpp"
#include "aps/simplex.hpp"

namespace aps {

enum class LpVariant { FiniteHorizon, SteadyState };
const char* to_string(LpVariant v);

/// Perfect-foresight dispatch LP. Variables per step: charge c_t, discharge d_t, import
/// i_t, export e_t (indices 4t .. 4t+3). Rows: one power balance per step, one two-sided
/// SoC range per step (the state of charge substituted as a running sum), and for the
/// steady-state variant one cyclic equality R_T = R_0.
struct BatteryLp {
  lp::Problem problem;
  LpVariant variant = LpVariant::FiniteHorizon;
  int steps = 0;

  static int charge(int t) { return 4 * t; }
  static int discharge(int t) { return 4 * t + 1; }
  static int import(int t) { return 4 * t + 2; }
  static int export_(int t) { return 4 * t + 3; }

  int balance_row(int t) const { return t; }
  int soc_row(int t) const { return steps + t; }  // bounds R_{t+1}

  int equality_count() const;
  /// One-sided inequalities encoded by the SoC ranges (two per step when both bounds are finite).
  int soc_inequality_count() const;
};

class InvalidScenario : public Error {
 public:
  using Error::Error;
};

BatteryLp build_lp(const Scenario& scenario, const SystemParams& params, LpVariant variant);

struct DispatchStep {
  double charge = 0.0, discharge = 0.0, import = 0.0, export_ = 0.0;
  double soc = 0.0;  // at the start of the step
};

struct LpSolution {
  lp::Status status = lp::Status::Infeasible;
  double objective = 0.0;
  std::vector<DispatchStep> schedule;
  std::vector<double> soc_path;  // R_0 .. R_T
  long iterations = 0;
};

LpSolution solve_bounded_lp(const BatteryLp& lp, const SystemParams& params);
LpSolution solve_benchmark(const Scenario& scenario, const SystemParams& params, LpVariant variant);

/// Cost of never using the battery.
double no_battery_cost(const Scenario& scenario, const SystemParams& params);

class InstanceTooLarge : public Error {
 public:
  using Error::Error;
};

/// Exhaustive search over per-step net battery power on the grid
/// {-discharge_max, ..., charge_max} with the given spacing. Exact transitions, SoC bounds
/// and (for the steady-state variant) R_T = R_0 within 1e-9. Requires T <= 6 and at most
/// kBruteForceNodeCap leaf sequences.
inline constexpr double kBruteForceNodeCap = 5e7;
double brute_force_oracle(const Scenario& scenario, const SystemParams& params, double grid_step, LpVariant variant);

/// Upper bound on (brute-force minimum - LP optimum) for grid-aligned instances with unit
/// efficiency: rounding the LP's SoC path down onto the grid moves each action by less
/// than two grid steps, and the step cost is Lipschitz with constant max(buy, sell) * dt.
double discretization_bound(const Scenario& scenario, const SystemParams& params, double grid_step);

}  // namespace aps
