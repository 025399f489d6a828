#include "aps/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "aps/error.hpp"
#include "aps/policy.hpp"

namespace aps {

Projection project_action(double requested, const SystemState& state, const SystemParams& params) {
  if (!std::isfinite(requested)) return {0.0, true};
  double x = std::clamp(requested, -params.discharge_max, params.charge_max);
  const double eta = params.eta_oneway();
  if (x > 0.0) {
    const double headroom = std::max(0.0, params.battery_capacity - state.soc);
    x = std::min(x, headroom / (eta * params.dt_hours));
  } else if (x < 0.0) {
    const double available = std::max(0.0, state.soc);
    x = std::max(x, -available * eta / params.dt_hours);
  }
  return {x, false};
}

double transition(const SystemState& state, double applied_action, const SystemParams& params) {
  const double eta = params.eta_oneway();
  const double charge = std::max(applied_action, 0.0);
  const double discharge = std::max(-applied_action, 0.0);
  const double next = state.soc + eta * charge * params.dt_hours - discharge * params.dt_hours / eta;
  return std::clamp(next, 0.0, params.battery_capacity);
}

double grid_imbalance(const SystemState& state, double applied_action) {
  return state.load - state.pv + applied_action;
}

double step_cost(const SystemState& state, double applied_action, const SystemParams& params) {
  const double g = grid_imbalance(state, applied_action);
  return (std::max(g, 0.0) * state.buy_price - std::max(-g, 0.0) * state.sell_price) * params.dt_hours;
}

SystemState make_state(int t, double soc, const Scenario& scenario) {
  const auto i = static_cast<std::size_t>(t);
  return {t, soc, scenario.pv[i], scenario.load[i], scenario.buy_price[i], scenario.sell_price[i]};
}

namespace {

void check_horizon(const Scenario& scenario, const SystemParams& params) {
  if (scenario.size() < static_cast<std::size_t>(params.horizon_steps)) {
    throw ConfigError("scenario", "covers " + std::to_string(scenario.size()) + " steps, horizon is " +
                                      std::to_string(params.horizon_steps));
  }
}

void record_step(Trajectory& traj, const SystemState& state, double requested, const SystemParams& params) {
  const Projection p = project_action(requested, state, params);
  StepResult r;
  r.requested_action = requested;
  r.applied_action = p.applied;
  r.nonfinite_action = p.nonfinite;
  r.grid_imbalance = grid_imbalance(state, p.applied);
  r.cost = step_cost(state, p.applied, params);
  r.next_soc = transition(state, p.applied, params);
  traj.states.push_back(state);
  traj.steps.push_back(r);
  traj.total_cost += r.cost;
  traj.nonfinite_actions += p.nonfinite ? 1 : 0;
}

}  // namespace

Trajectory run_episode(PolicySession& policy, const Scenario& scenario, const SystemParams& params) {
  check_horizon(scenario, params);
  Trajectory traj;
  traj.states.reserve(static_cast<std::size_t>(params.horizon_steps));
  traj.steps.reserve(static_cast<std::size_t>(params.horizon_steps));
  double soc = params.initial_soc();
  for (int t = 0; t < params.horizon_steps; ++t) {
    const SystemState state = make_state(t, soc, scenario);
    const auto start = std::chrono::steady_clock::now();
    double requested = 0.0;
    try {
      requested = policy.query_action(state);
    } catch (PolicyFailure& failure) {
      if (failure.step() < 0) failure.set_step(t);
      throw;
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    traj.wallclock_seconds += elapsed;
    traj.peak_step_seconds = std::max(traj.peak_step_seconds, elapsed);
    record_step(traj, state, requested, params);
    soc = traj.steps.back().next_soc;
  }
  return traj;
}

Trajectory rollout_actions(std::span<const double> actions, const Scenario& scenario,
                           const SystemParams& params) {
  check_horizon(scenario, params);
  if (actions.size() != static_cast<std::size_t>(params.horizon_steps)) {
    throw ConfigError("actions", "length must equal horizon_steps");
  }
  Trajectory traj;
  double soc = params.initial_soc();
  for (int t = 0; t < params.horizon_steps; ++t) {
    record_step(traj, make_state(t, soc, scenario), actions[static_cast<std::size_t>(t)], params);
    soc = traj.steps.back().next_soc;
  }
  return traj;
}

}  // namespace aps
