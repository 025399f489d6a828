#pragma once

#include <span>
#include <vector>

#include "aps/exogenous.hpp"
#include "aps/params.hpp"

namespace aps {

class PolicySession;

/// Information available to a policy at the start of step t.
struct SystemState {
  int t = 0;
  double soc = 0.0;         // kWh
  double pv = 0.0;          // kW
  double load = 0.0;        // kW
  double buy_price = 0.0;   // EUR/kWh
  double sell_price = 0.0;  // EUR/kWh
};

struct Projection {
  double applied = 0.0;
  bool nonfinite = false;  // requested value was NaN or infinite and was replaced by 0
};

struct StepResult {
  double requested_action = 0.0;  // kW, as returned by the policy
  double applied_action = 0.0;    // kW, after projection
  double grid_imbalance = 0.0;    // kW, > 0 import
  double cost = 0.0;              // EUR
  double next_soc = 0.0;          // kWh
  bool nonfinite_action = false;
};

struct Trajectory {
  std::vector<SystemState> states;
  std::vector<StepResult> steps;
  double total_cost = 0.0;
  double wallclock_seconds = 0.0;   // summed policy decision time
  double peak_step_seconds = 0.0;
  int nonfinite_actions = 0;
};

/// Clamp to [-discharge_max, charge_max], then shrink the magnitude so the next state of
/// charge stays inside [0, capacity].
Projection project_action(double requested, const SystemState& state, const SystemParams& params);

/// Next state of charge for an already feasible action; clamped to [0, capacity].
double transition(const SystemState& state, double applied_action, const SystemParams& params);

/// Net grid exchange: load - pv + x (charging draws from the grid, discharging feeds it).
double grid_imbalance(const SystemState& state, double applied_action);

/// [max(g,0) * buy - max(-g,0) * sell] * dt.
double step_cost(const SystemState& state, double applied_action, const SystemParams& params);

SystemState make_state(int t, double soc, const Scenario& scenario);

/// Sequential rollout. Throws PolicyFailure (with the failing step) if the policy fails.
Trajectory run_episode(PolicySession& policy, const Scenario& scenario, const SystemParams& params);

/// Rollout of a fixed action sequence, same projection and accounting as run_episode.
Trajectory rollout_actions(std::span<const double> actions, const Scenario& scenario,
                           const SystemParams& params);

}  // namespace aps
