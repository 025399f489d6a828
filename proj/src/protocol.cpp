#include "aps/protocol.hpp"

#include <cmath>
#include <limits>

#include <json.hpp>

namespace aps::protocol {

using nlohmann::json;

std::string init_frame(const SystemParams& p) {
  json j = {
      {"kind", "init"},
      {"battery_capacity_kwh", p.battery_capacity},
      {"roundtrip_efficiency", p.roundtrip_efficiency},
      {"eta_oneway", p.eta_oneway()},
      {"initial_energy_stored_kwh", p.initial_soc()},
      {"max_charge_power_kw", p.charge_max},
      {"max_discharge_power_kw", p.discharge_max},
      {"dt_hours", p.dt_hours},
      {"horizon_steps", p.horizon_steps},
      {"grid_sell_price", p.sell_price},
  };
  return j.dump();
}

std::string state_frame(const SystemState& s, double battery_capacity_kwh) {
  json j = {
      {"kind", "state"},
      {"t", s.t},
      {"current_energy_stored_kwh", s.soc},
      {"current_pv_generation_kw", s.pv},
      {"current_demand_kw", s.load},
      {"current_grid_buy_price", s.buy_price},
      {"current_grid_sell_price", s.sell_price},
      {"battery_capacity_kwh", battery_capacity_kwh},
  };
  return j.dump();
}

std::string shutdown_frame() { return R"({"kind":"shutdown"})"; }

namespace {

[[noreturn]] void malformed(std::string_view line, const std::string& why) {
  constexpr std::size_t kQuoteMax = 200;
  std::string quoted(line.substr(0, kQuoteMax));
  if (line.size() > kQuoteMax) quoted += "...";
  throw ProtocolError(why + ": \"" + quoted + "\"");
}

}  // namespace

Reply parse_reply(std::string_view line) {
  json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) malformed(line, "reply is not valid JSON");
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) {
    malformed(line, "reply has no string field 'kind'");
  }
  const auto kind = j["kind"].get<std::string>();
  Reply r;
  if (kind == "ack") {
    r.kind = Reply::Kind::Ack;
  } else if (kind == "action") {
    r.kind = Reply::Kind::Action;
    if (!j.contains("action_kw")) malformed(line, "action frame without 'action_kw'");
    const auto& v = j["action_kw"];
    if (v.is_number()) {
      r.action_kw = v.get<double>();
      r.nonfinite = !std::isfinite(r.action_kw);
    } else if (v.is_null()) {
      r.action_kw = std::numeric_limits<double>::quiet_NaN();
      r.nonfinite = true;
    } else if (v.is_string() && (v == "NaN" || v == "Infinity" || v == "-Infinity")) {
      r.action_kw = std::numeric_limits<double>::quiet_NaN();
      r.nonfinite = true;
    } else {
      malformed(line, "'action_kw' is not a number");
    }
  } else if (kind == "error") {
    r.kind = Reply::Kind::Error;
    if (j.contains("message") && j["message"].is_string()) r.message = j["message"].get<std::string>();
    if (j.contains("traceback") && j["traceback"].is_string()) r.traceback = j["traceback"].get<std::string>();
  } else {
    malformed(line, "unexpected frame kind '" + kind + "'");
  }
  return r;
}

}  // namespace aps::protocol
