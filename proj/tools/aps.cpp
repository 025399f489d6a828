// aps: command-line front end.
//
// Exit codes: 0 success, 1 error (bad config, refused output directory, missing
// credentials, failed policy), 2 search finished only partially.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "aps/benchmark.hpp"
#include "aps/config.hpp"
#include "aps/exogenous.hpp"
#include "aps/llm.hpp"
#include "aps/policy.hpp"
#include "aps/results.hpp"
#include "aps/search.hpp"
#include "aps/simulator.hpp"
#include "aps/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitPartial = 2;

// Overrides shared by every command. Unset options leave the config value alone.
struct SystemFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> days;
  std::optional<double> capacity;
  std::optional<double> charge_max;
  std::optional<double> discharge_max;

  void add(CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON config file (same schema as the run manifest)");
    cmd->add_option("--seed", seed, "scenario seed");
    cmd->add_option("--days", days, "horizon length in days");
    cmd->add_option("--capacity", capacity, "battery capacity [kWh]");
    cmd->add_option("--charge-max", charge_max, "charge limit [kW]");
    cmd->add_option("--discharge-max", discharge_max, "discharge limit [kW]");
  }

  aps::RunConfig resolve() const {
    aps::RunConfig c = config.empty() ? aps::RunConfig{} : aps::load_config(config);
    auto& s = c.system;
    if (seed) s.seed = *seed;
    if (days) s.horizon_steps = static_cast<int>(std::lround(*days * 24.0 / s.dt_hours));
    if (capacity) s.battery_capacity = *capacity;
    if (charge_max) s.charge_max = *charge_max;
    if (discharge_max) s.discharge_max = *discharge_max;
    s.validate();
    return c;
  }
};

std::vector<std::string> split_runner(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> argv;
  for (std::string w; in >> w;) argv.push_back(w);
  return argv;
}

aps::GeneratorKind generator_kind(const std::string& s) {
  if (s == "llm") return aps::GeneratorKind::Llm;
  if (s == "scripted") return aps::GeneratorKind::Scripted;
  throw aps::ConfigError("generator", "expected llm or scripted, got '" + s + "'");
}

json lp_solution_json(const aps::LpSolution& sol) {
  json schedule = json::array();
  for (std::size_t t = 0; t < sol.schedule.size(); ++t) {
    const auto& s = sol.schedule[t];
    schedule.push_back({{"t", t}, {"c", s.charge}, {"d", s.discharge}, {"i", s.import},
                        {"e", s.export_}, {"soc", s.soc}});
  }
  return {{"objective", sol.objective}, {"status", aps::lp::to_string(sol.status)}, {"schedule", schedule}};
}

void write_schedule_csv(const aps::LpSolution& sol, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw aps::IoError("cannot write " + path.string());
  out << "t,c,d,i,e,soc\n";
  using aps::util::format_double;
  for (std::size_t t = 0; t < sol.schedule.size(); ++t) {
    const auto& s = sol.schedule[t];
    out << t << ',' << format_double(s.charge) << ',' << format_double(s.discharge) << ','
        << format_double(s.import) << ',' << format_double(s.export_) << ',' << format_double(s.soc) << '\n';
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw aps::IoError("cannot write " + path.string());
  out << text;
}

// --- run --------------------------------------------------------------------

struct RunFlags {
  SystemFlags sys;
  std::optional<int> episodes, iterations, parallel;
  std::string generator, meta_generator, scripted_dir, runner, seed_policy, scenario;
  std::optional<double> step_timeout;
  std::string out = "aps_run";
};

int cmd_run(const RunFlags& f, const std::string& command_line) {
  auto cfg = f.sys.resolve();
  auto& s = cfg.search;
  if (f.episodes) s.episodes = *f.episodes;
  if (f.iterations) s.iterations = *f.iterations;
  if (f.parallel) s.parallel_episodes = *f.parallel;
  if (!f.generator.empty()) {
    s.generator = generator_kind(f.generator);
    // The meta level follows the generator unless set on its own.
    if (f.meta_generator.empty()) s.meta_generator = s.generator;
  }
  if (!f.meta_generator.empty()) s.meta_generator = generator_kind(f.meta_generator);
  if (!f.scripted_dir.empty()) s.scripted_dir = f.scripted_dir;
  if (!f.runner.empty()) s.runner = split_runner(f.runner);
  if (!f.scenario.empty()) s.scenario_file = f.scenario;
  if (f.step_timeout) s.per_step_timeout = *f.step_timeout;
  if (f.seed_policy == "fixed") s.seed_policy = aps::SeedPolicy::Fixed;
  else if (f.seed_policy == "per-episode-offset") s.seed_policy = aps::SeedPolicy::PerEpisodeOffset;
  else if (!f.seed_policy.empty()) throw aps::ConfigError("search.seed_policy", "unknown value '" + f.seed_policy + "'");
  s.validate();
  cfg.endpoint.validate();

  if (s.generator == aps::GeneratorKind::Llm || s.meta_generator == aps::GeneratorKind::Llm) {
    aps::llm::LlmClient(cfg.endpoint, std::make_shared<aps::llm::HttpTransport>()).check_credentials();
  }

  const auto summary = aps::search::run_search(cfg, f.out, {}, command_line);
  int ok = 0;
  for (const auto& r : summary.records) ok += r.outcome == aps::Outcome::Success;
  std::cout << "records: " << summary.records.size() << " (" << ok << " successful)\n";
  for (const auto& b : summary.benchmarks) {
    std::cout << "seed " << b.seed << ": no-battery " << aps::util::format_fixed(b.no_battery, 2)
              << ", SS-Opt " << aps::util::format_fixed(b.steady_state, 2) << ", FH-Opt "
              << aps::util::format_fixed(b.finite_horizon, 2) << '\n';
  }
  std::cout << "output: " << f.out << '\n';
  if (!summary.complete) {
    std::cerr << "aps: run incomplete, a generator failed\n";
    return kExitPartial;
  }
  return kExitOk;
}

// --- benchmark --------------------------------------------------------------

int cmd_benchmark(const SystemFlags& sys, const std::string& variant, const std::string& out_dir) {
  const auto cfg = sys.resolve();
  const auto& p = cfg.system;
  const auto sc = aps::generate_scenario(p);
  const bool all = variant == "all";
  if (!all && variant != "fh" && variant != "ss" && variant != "nobattery") {
    throw aps::ConfigError("variant", "expected fh, ss, nobattery or all");
  }
  fs::create_directories(out_dir);

  json doc = {{"seed", p.seed}, {"steps", sc.size()}};
  auto solve = [&](aps::LpVariant v, const char* key) {
    const auto sol = aps::solve_benchmark(sc, p, v);
    if (sol.status != aps::lp::Status::Optimal) {
      throw aps::Error(std::string(key) + " LP not solved: " + aps::lp::to_string(sol.status));
    }
    doc[key] = lp_solution_json(sol);
    write_schedule_csv(sol, fs::path(out_dir) / (std::string("schedule_") + key + ".csv"));
    std::cout << key << ": " << aps::util::format_fixed(sol.objective, 4) << '\n';
  };
  if (all || variant == "fh") solve(aps::LpVariant::FiniteHorizon, "fh");
  if (all || variant == "ss") solve(aps::LpVariant::SteadyState, "ss");
  if (all || variant == "nobattery") {
    const double nb = aps::no_battery_cost(sc, p);
    doc["nobattery"] = {{"objective", nb}};
    std::cout << "nobattery: " << aps::util::format_fixed(nb, 4) << '\n';
  }
  write_text(fs::path(out_dir) / "benchmarks.json", doc.dump(2) + "\n");
  return kExitOk;
}

// --- simulate ---------------------------------------------------------------

int cmd_simulate(const SystemFlags& sys, const std::string& policy, const std::string& runner,
                 const std::string& trajectory_path) {
  const auto cfg = sys.resolve();
  const auto& p = cfg.system;
  const auto sc = cfg.search.scenario_file.empty() ? aps::generate_scenario(p)
                                                   : aps::read_scenario_csv(cfg.search.scenario_file);

  aps::PolicyHandle handle;
  bool known_builtin = false;
  for (const auto& b : aps::builtin_policies()) known_builtin |= b.id == policy;
  if (known_builtin) {
    handle = aps::PolicyHandle::native(policy);
  } else if (fs::exists(policy)) {
    handle = aps::PolicyHandle::external(runner.empty() ? cfg.search.runner : split_runner(runner), policy);
  } else {
    throw aps::ConfigError("policy", "'" + policy + "' is neither a built-in policy nor a file");
  }
  handle.per_step_timeout = cfg.search.per_step_timeout;
  handle.total_timeout = cfg.search.total_timeout;

  aps::EpisodeResult res;
  try {
    res = aps::evaluate_policy(handle, sc, p);
  } catch (const aps::PolicyFailure& e) {
    const auto d = aps::classify_failure(e);
    std::cerr << "failure: " << aps::to_string(d.category);
    if (d.step >= 0) std::cerr << " at step " << d.step;
    std::cerr << "\n" << d.message << '\n';
    return kExitError;
  }
  const auto& traj = res.trajectory;
  const auto m = aps::compute_metrics(traj, sc, p, {}, 1);

  std::ofstream out(trajectory_path);
  if (!out) throw aps::IoError("cannot write " + trajectory_path);
  using aps::util::format_double;
  out << "t,soc,requested,applied,g,cost\n";
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    const auto& st = traj.steps[t];
    out << t << ',' << format_double(traj.states[t].soc) << ',' << format_double(st.requested_action) << ','
        << format_double(st.applied_action) << ',' << format_double(st.grid_imbalance) << ','
        << format_double(st.cost) << '\n';
  }

  std::cout << "total_cost: " << aps::util::format_fixed(m.total_cost, 4) << '\n'
            << "utilization: " << aps::util::format_fixed(m.utilization, 1) << "%\n"
            << "avg_soc: " << aps::util::format_fixed(m.avg_soc, 2) << " kWh\n";
  if (m.failure) std::cout << "warning: " << m.failure->message << '\n';
  return kExitOk;
}

// --- export-scenario --------------------------------------------------------

int cmd_export(const SystemFlags& sys, const std::string& out) {
  const auto cfg = sys.resolve();
  const auto sc = aps::generate_scenario(cfg.system);
  if (out == "-") {
    aps::write_scenario_csv(sc, std::cout);
  } else {
    aps::write_scenario_csv(sc, fs::path(out));
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Agentic policy search for residential battery control"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(aps::version()));

  RunFlags run;
  auto* run_cmd = app.add_subcommand("run", "search for a policy over episodes and iterations");
  run.sys.add(run_cmd);
  run_cmd->add_option("--episodes", run.episodes);
  run_cmd->add_option("--iterations", run.iterations, "meta iterations per episode");
  run_cmd->add_option("--generator", run.generator, "llm or scripted");
  run_cmd->add_option("--meta-generator", run.meta_generator, "llm or scripted (defaults to --generator)");
  run_cmd->add_option("--scripted-dir", run.scripted_dir, "directory with generation/ and meta/ responses");
  run_cmd->add_option("--out", run.out, "run directory, must be absent or empty")->capture_default_str();
  run_cmd->add_option("--runner", run.runner, "command used to run candidate files (split on spaces)");
  run_cmd->add_option("--parallel-episodes", run.parallel);
  run_cmd->add_option("--seed-policy", run.seed_policy, "fixed or per-episode-offset");
  run_cmd->add_option("--scenario", run.scenario, "scenario CSV replacing the generated one");
  run_cmd->add_option("--step-timeout", run.step_timeout, "per-step policy timeout [s]");

  SystemFlags bench;
  std::string variant = "all", bench_out = ".";
  auto* bench_cmd = app.add_subcommand("benchmark", "perfect-foresight LP benchmarks");
  bench.add(bench_cmd);
  bench_cmd->add_option("--variant", variant, "fh, ss, nobattery or all")->capture_default_str();
  bench_cmd->add_option("--out", bench_out, "directory for benchmarks.json and schedule CSVs")->capture_default_str();

  SystemFlags sim;
  std::string policy, runner, trajectory = "trajectory.csv";
  auto* sim_cmd = app.add_subcommand("simulate", "run one episode with a single policy");
  sim.add(sim_cmd);
  sim_cmd->add_option("--policy", policy, "built-in id (noop, price-threshold, self-consumption) or candidate file")
      ->required();
  sim_cmd->add_option("--runner", runner, "command used to run a candidate file");
  sim_cmd->add_option("--trajectory", trajectory, "trajectory CSV path")->capture_default_str();

  SystemFlags exp;
  std::string exp_out = "scenario.csv";
  auto* exp_cmd = app.add_subcommand("export-scenario", "write the exogenous series as CSV");
  exp.add(exp_cmd);
  exp_cmd->add_option("--out", exp_out, "output path, - for stdout")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  std::string command_line;
  for (int i = 0; i < argc; ++i) command_line += (i ? " " : "") + std::string(argv[i]);

  try {
    if (*run_cmd) return cmd_run(run, command_line);
    if (*bench_cmd) return cmd_benchmark(bench, variant, bench_out);
    if (*sim_cmd) return cmd_simulate(sim, policy, runner, trajectory);
    if (*exp_cmd) return cmd_export(exp, exp_out);
  } catch (const aps::llm::AuthError& e) {
    std::cerr << "aps: authentication: " << e.what() << '\n';
  } catch (const aps::ConfigError& e) {
    std::cerr << "aps: config: " << e.what() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "aps: " << e.what() << '\n';
  }
  return kExitError;
}
