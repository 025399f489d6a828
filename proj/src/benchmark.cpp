#include "aps/benchmark.hpp"

#include <cmath>
#include <functional>
#include <limits>

#include "aps/simulator.hpp"

namespace aps {

const char* to_string(LpVariant v) {
  return v == LpVariant::FiniteHorizon ? "finite-horizon" : "steady-state";
}

int BatteryLp::equality_count() const {
  int n = 0;
  for (const auto& r : problem.rows) n += r.lower == r.upper ? 1 : 0;
  return n;
}

int BatteryLp::soc_inequality_count() const {
  int n = 0;
  for (int t = 0; t < steps; ++t) {
    const auto& r = problem.rows[static_cast<std::size_t>(soc_row(t))];
    n += std::isfinite(r.lower) ? 1 : 0;
    n += std::isfinite(r.upper) ? 1 : 0;
  }
  return n;
}

BatteryLp build_lp(const Scenario& scenario, const SystemParams& params, LpVariant variant) {
  params.validate();
  const int T = params.horizon_steps;
  if (scenario.size() != static_cast<std::size_t>(T)) {
    throw InvalidScenario("scenario has " + std::to_string(scenario.size()) + " steps, expected " + std::to_string(T));
  }
  BatteryLp out;
  out.variant = variant;
  out.steps = T;
  auto& p = out.problem;
  const double dt = params.dt_hours;
  const double eta = params.eta_oneway();

  for (int t = 0; t < T; ++t) {
    const auto i = static_cast<std::size_t>(t);
    p.add_variable(0.0, 0.0, params.charge_max);
    p.add_variable(0.0, 0.0, params.discharge_max);
    p.add_variable(scenario.buy_price[i] * dt, 0.0, lp::kInf);
    p.add_variable(-scenario.sell_price[i] * dt, 0.0, lp::kInf);
  }
  // pv + d + i = load + c + e
  for (int t = 0; t < T; ++t) {
    const auto i = static_cast<std::size_t>(t);
    const double rhs = scenario.load[i] - scenario.pv[i];
    p.add_row({{BatteryLp::charge(t), -1.0}, {BatteryLp::discharge(t), 1.0}, {BatteryLp::import(t), 1.0},
               {BatteryLp::export_(t), -1.0}},
              rhs, rhs);
  }
  // 0 <= R_0 + sum_{k<=t} (eta c_k - d_k / eta) dt <= capacity
  const double r0 = params.initial_soc();
  std::vector<std::pair<int, double>> running;
  for (int t = 0; t < T; ++t) {
    running.emplace_back(BatteryLp::charge(t), eta * dt);
    running.emplace_back(BatteryLp::discharge(t), -dt / eta);
    p.add_row(running, -r0, params.battery_capacity - r0);
  }
  if (variant == LpVariant::SteadyState) p.add_row(running, 0.0, 0.0);
  return out;
}

LpSolution solve_bounded_lp(const BatteryLp& blp, const SystemParams& params) {
  const lp::Solution s = lp::solve(blp.problem);
  LpSolution out;
  out.status = s.status;
  out.iterations = s.iterations;
  if (s.status != lp::Status::Optimal) return out;
  out.objective = s.objective;
  const double eta = params.eta_oneway();
  double soc = params.initial_soc();
  out.soc_path.push_back(soc);
  for (int t = 0; t < blp.steps; ++t) {
    DispatchStep step;
    step.charge = s.x[static_cast<std::size_t>(BatteryLp::charge(t))];
    step.discharge = s.x[static_cast<std::size_t>(BatteryLp::discharge(t))];
    step.import = s.x[static_cast<std::size_t>(BatteryLp::import(t))];
    step.export_ = s.x[static_cast<std::size_t>(BatteryLp::export_(t))];
    step.soc = soc;
    soc += (eta * step.charge - step.discharge / eta) * params.dt_hours;
    out.schedule.push_back(step);
    out.soc_path.push_back(soc);
  }
  return out;
}

LpSolution solve_benchmark(const Scenario& scenario, const SystemParams& params, LpVariant variant) {
  return solve_bounded_lp(build_lp(scenario, params, variant), params);
}

double no_battery_cost(const Scenario& scenario, const SystemParams& params) {
  if (scenario.size() < static_cast<std::size_t>(params.horizon_steps)) {
    throw InvalidScenario("scenario shorter than the horizon");
  }
  double total = 0.0;
  for (int t = 0; t < params.horizon_steps; ++t) total += step_cost(make_state(t, 0.0, scenario), 0.0, params);
  return total;
}

double brute_force_oracle(const Scenario& scenario, const SystemParams& params, double grid_step, LpVariant variant) {
  params.validate();
  const int T = params.horizon_steps;
  if (!(grid_step > 0.0)) throw ConfigError("grid_step", "must be > 0");
  if (T > 6) throw InstanceTooLarge("brute force supports at most 6 steps, got " + std::to_string(T));
  if (scenario.size() < static_cast<std::size_t>(T)) throw InvalidScenario("scenario shorter than the horizon");

  // Grid points from -discharge_max to charge_max, both ends included.
  std::vector<double> levels;
  const long lo = -static_cast<long>(std::floor(params.discharge_max / grid_step + 1e-9));
  const long hi = static_cast<long>(std::floor(params.charge_max / grid_step + 1e-9));
  for (long k = lo; k <= hi; ++k) levels.push_back(static_cast<double>(k) * grid_step);
  if (std::pow(static_cast<double>(levels.size()), T) > kBruteForceNodeCap) {
    throw InstanceTooLarge("search space of " + std::to_string(levels.size()) + "^" + std::to_string(T) +
                           " sequences exceeds the cap");
  }

  const double eta = params.eta_oneway();
  const double cap = params.battery_capacity;
  const double r0 = params.initial_soc();
  constexpr double kTol = 1e-9;
  double best = std::numeric_limits<double>::infinity();

  std::function<void(int, double, double)> search = [&](int t, double soc, double cost) {
    if (t == T) {
      if (variant == LpVariant::SteadyState && std::abs(soc - r0) > kTol) return;
      best = std::min(best, cost);
      return;
    }
    const SystemState state = make_state(t, soc, scenario);
    for (double x : levels) {
      const double next = soc + eta * std::max(x, 0.0) * params.dt_hours - std::max(-x, 0.0) * params.dt_hours / eta;
      if (next < -kTol || next > cap + kTol) continue;
      search(t + 1, std::clamp(next, 0.0, cap), cost + step_cost(state, x, params));
    }
  };
  search(0, r0, 0.0);
  return best;
}

double discretization_bound(const Scenario& scenario, const SystemParams& params, double grid_step) {
  double sum = 0.0;
  for (int t = 0; t < params.horizon_steps; ++t) {
    const auto i = static_cast<std::size_t>(t);
    sum += std::max(scenario.buy_price[i], scenario.sell_price[i]) * params.dt_hours;
  }
  return 2.0 * grid_step * sum;
}

}  // namespace aps
