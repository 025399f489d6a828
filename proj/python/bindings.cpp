// Python bindings. Results come back as plain dicts and lists; heavy calls drop the GIL.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "aps/benchmark.hpp"
#include "aps/codegen.hpp"
#include "aps/config.hpp"
#include "aps/exogenous.hpp"
#include "aps/llm.hpp"
#include "aps/policy.hpp"
#include "aps/protocol.hpp"
#include "aps/results.hpp"
#include "aps/search.hpp"
#include "aps/simulator.hpp"

namespace py = pybind11;
using namespace aps;

namespace {

py::dict lp_dict(const LpSolution& s) {
  py::list schedule;
  for (std::size_t t = 0; t < s.schedule.size(); ++t) {
    const auto& d = s.schedule[t];
    py::dict row;
    row["t"] = t;
    row["c"] = d.charge;
    row["d"] = d.discharge;
    row["i"] = d.import;
    row["e"] = d.export_;
    row["soc"] = d.soc;
    schedule.append(row);
  }
  py::dict out;
  out["objective"] = s.objective;
  out["status"] = lp::to_string(s.status);
  out["schedule"] = schedule;
  out["iterations"] = s.iterations;
  return out;
}

LpVariant variant_from(const std::string& v) {
  if (v == "fh") return LpVariant::FiniteHorizon;
  if (v == "ss") return LpVariant::SteadyState;
  throw ConfigError("variant", "expected 'fh' or 'ss'");
}

py::dict simulate(const std::string& policy, const SystemParams& params, const std::vector<std::string>& runner,
                  double step_timeout) {
  EpisodeResult res;
  Scenario sc;
  MetaMetrics m;
  {
    py::gil_scoped_release nogil;
    sc = generate_scenario(params);
    bool builtin = false;
    for (const auto& b : builtin_policies()) builtin |= b.id == policy;
    auto h = builtin ? PolicyHandle::native(policy) : PolicyHandle::external(runner, policy);
    h.per_step_timeout = step_timeout;
    res = evaluate_policy(h, sc, params);
    m = compute_metrics(res.trajectory, sc, params, {}, 1);
  }
  py::list soc, requested, applied, grid, cost;
  for (std::size_t t = 0; t < res.trajectory.steps.size(); ++t) {
    const auto& st = res.trajectory.steps[t];
    soc.append(res.trajectory.states[t].soc);
    requested.append(st.requested_action);
    applied.append(st.applied_action);
    grid.append(st.grid_imbalance);
    cost.append(st.cost);
  }
  py::dict out;
  out["total_cost"] = m.total_cost;
  out["utilization"] = m.utilization;
  out["avg_soc"] = m.avg_soc;
  out["soc"] = soc;
  out["requested"] = requested;
  out["applied"] = applied;
  out["g"] = grid;
  out["cost"] = cost;
  return out;
}

}  // namespace

PYBIND11_MODULE(_aps, m) {
  m.doc() = "Agentic policy search core";
  m.attr("__version__") = version();

  static py::exception<Error> base(m, "ApsError");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<PolicyFailure>(m, "PolicyFailure", base.ptr());
  py::register_exception<codegen::ExtractionError>(m, "ExtractionError", base.ptr());
  py::register_exception<protocol::ProtocolError>(m, "ProtocolError", base.ptr());
  py::register_exception<llm::LlmError>(m, "LlmError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  py::class_<SystemParams>(m, "SystemParams")
      .def(py::init<>())
      .def_readwrite("battery_capacity", &SystemParams::battery_capacity)
      .def_readwrite("roundtrip_efficiency", &SystemParams::roundtrip_efficiency)
      .def_readwrite("initial_soc_fraction", &SystemParams::initial_soc_fraction)
      .def_readwrite("charge_max", &SystemParams::charge_max)
      .def_readwrite("discharge_max", &SystemParams::discharge_max)
      .def_readwrite("dt_hours", &SystemParams::dt_hours)
      .def_readwrite("horizon_steps", &SystemParams::horizon_steps)
      .def_readwrite("base_load", &SystemParams::base_load)
      .def_readwrite("morning_peak", &SystemParams::morning_peak)
      .def_readwrite("evening_peak", &SystemParams::evening_peak)
      .def_readwrite("pv_nominal", &SystemParams::pv_nominal)
      .def_readwrite("buy_price_mean", &SystemParams::buy_price_mean)
      .def_readwrite("sell_price", &SystemParams::sell_price)
      .def_readwrite("price_volatility", &SystemParams::price_volatility)
      .def_readwrite("seed", &SystemParams::seed)
      .def("eta_oneway", &SystemParams::eta_oneway)
      .def("initial_soc", &SystemParams::initial_soc)
      .def("validate", &SystemParams::validate);

  py::class_<Scenario>(m, "Scenario")
      .def(py::init<>())
      .def_readwrite("hour_of_day", &Scenario::hour_of_day)
      .def_readwrite("pv", &Scenario::pv)
      .def_readwrite("load", &Scenario::load)
      .def_readwrite("buy_price", &Scenario::buy_price)
      .def_readwrite("sell_price", &Scenario::sell_price)
      .def_readwrite("seed", &Scenario::seed)
      .def("__len__", &Scenario::size)
      .def("validate", &Scenario::validate);

  py::class_<SystemState>(m, "SystemState")
      .def(py::init<>())
      .def(py::init([](int t, double soc, double pv, double load, double buy, double sell) {
             return SystemState{t, soc, pv, load, buy, sell};
           }),
           py::arg("t"), py::arg("soc"), py::arg("pv"), py::arg("load"), py::arg("buy_price"), py::arg("sell_price"))
      .def_readwrite("t", &SystemState::t)
      .def_readwrite("soc", &SystemState::soc)
      .def_readwrite("pv", &SystemState::pv)
      .def_readwrite("load", &SystemState::load)
      .def_readwrite("buy_price", &SystemState::buy_price)
      .def_readwrite("sell_price", &SystemState::sell_price);

  m.def("generate_scenario", &generate_scenario, py::arg("params"));
  m.def("read_scenario_csv", py::overload_cast<const std::filesystem::path&>(&read_scenario_csv));
  m.def("write_scenario_csv",
        py::overload_cast<const Scenario&, const std::filesystem::path&>(&write_scenario_csv));

  m.def("project_action", [](double a, const SystemState& s, const SystemParams& p) {
    return project_action(a, s, p).applied;
  });
  m.def("transition", &transition);
  m.def("grid_imbalance", &grid_imbalance);
  m.def("step_cost", &step_cost);

  m.def("no_battery_cost", &no_battery_cost);
  m.def(
      "solve_benchmark",
      [](const Scenario& sc, const SystemParams& p, const std::string& v) {
        LpSolution s;
        {
          py::gil_scoped_release nogil;
          s = solve_benchmark(sc, p, variant_from(v));
        }
        return lp_dict(s);
      },
      py::arg("scenario"), py::arg("params"), py::arg("variant") = "fh");
  m.def(
      "brute_force_oracle",
      [](const Scenario& sc, const SystemParams& p, double step, const std::string& v) {
        return brute_force_oracle(sc, p, step, variant_from(v));
      },
      py::arg("scenario"), py::arg("params"), py::arg("grid_step"), py::arg("variant") = "fh");

  m.def("builtin_policies", [] {
    std::vector<std::string> ids;
    for (const auto& b : builtin_policies()) ids.push_back(b.id);
    return ids;
  });
  m.def("simulate", &simulate, py::arg("policy"), py::arg("params") = SystemParams{},
        py::arg("runner") = std::vector<std::string>{"aps-policy-shim"}, py::arg("step_timeout") = 2.0);

  // Wire protocol, for external policy programs and their tests.
  auto proto = m.def_submodule("protocol");
  proto.def("init_frame", &protocol::init_frame);
  proto.def("state_frame", &protocol::state_frame);
  proto.def("shutdown_frame", &protocol::shutdown_frame);
  proto.def("parse_reply", [](const std::string& line) {
    const auto r = protocol::parse_reply(line);
    py::dict d;
    d["kind"] = r.kind == protocol::Reply::Kind::Ack ? "ack" : r.kind == protocol::Reply::Kind::Action ? "action" : "error";
    d["action_kw"] = r.action_kw;
    d["nonfinite"] = r.nonfinite;
    d["message"] = r.message;
    d["traceback"] = r.traceback;
    return d;
  });

  m.def("policy_signature", &codegen::policy_signature);
  m.def("build_generation_prompt", &codegen::build_generation_prompt, py::arg("task_description"),
        py::arg("signature"), py::arg("params") = SystemParams{});
  m.def("build_repair_prompt", &codegen::build_repair_prompt);
  m.def("extract_policy", [](const std::string& raw) {
    const auto a = codegen::extract_policy(raw);
    py::dict d;
    d["source"] = a.extracted_source;
    d["hash"] = a.hash_hex();
    d["notes"] = a.extraction_notes;
    return d;
  });

  m.def("decide_mode", [](const std::vector<double>& costs, int window, double eps) {
    return std::string(codegen::to_string(search::decide_mode(costs, window, eps)));
  }, py::arg("costs"), py::arg("window") = 3, py::arg("epsilon") = 0.01);

  m.def("estimate_cost", [](long long in, long long out, double in_price, double out_price) {
    llm::CostLedger l;
    l.input_tokens = in;
    l.output_tokens = out;
    l.input_price_per_m = in_price;
    l.output_price_per_m = out_price;
    return llm::estimate_cost(l);
  }, py::arg("input_tokens"), py::arg("output_tokens"), py::arg("input_price_per_m") = 0.15,
     py::arg("output_price_per_m") = 0.60);

  m.def(
      "run_search",
      [](const std::string& config_json, const std::filesystem::path& run_dir) {
        search::RunSummary s;
        {
          py::gil_scoped_release nogil;
          s = search::run_search(parse_config(config_json), run_dir, {}, "python");
        }
        py::dict d;
        d["complete"] = s.complete;
        d["records"] = s.records.size();
        py::list costs;
        for (const auto& r : s.records) {
          if (r.metrics) costs.append(r.metrics->total_cost);
          else costs.append(py::none());
        }
        d["total_costs"] = costs;
        return d;
      },
      py::arg("config_json"), py::arg("run_dir"));
}
