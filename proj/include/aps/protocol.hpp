#pragma once

#include <string>
#include <string_view>

#include "aps/error.hpp"
#include "aps/params.hpp"
#include "aps/simulator.hpp"

// Newline-delimited JSON between the host and an external policy process.
//
//   host -> policy  {"kind":"init", battery_capacity_kwh, roundtrip_efficiency, eta_oneway,
//                    initial_energy_stored_kwh, max_charge_power_kw, max_discharge_power_kw,
//                    dt_hours, horizon_steps, grid_sell_price}
//   policy -> host  {"kind":"ack"}
//   host -> policy  {"kind":"state", t, current_energy_stored_kwh, current_pv_generation_kw,
//                    current_demand_kw, current_grid_buy_price, current_grid_sell_price,
//                    battery_capacity_kwh}
//   policy -> host  {"kind":"action","action_kw":x} | {"kind":"error","message":..,"traceback":..}
//   host -> policy  {"kind":"shutdown"}
namespace aps::protocol {

class ProtocolError : public Error {
 public:
  using Error::Error;
};

std::string init_frame(const SystemParams& params);
std::string state_frame(const SystemState& state, double battery_capacity_kwh);
std::string shutdown_frame();

struct Reply {
  enum class Kind { Ack, Action, Error } kind = Kind::Ack;
  double action_kw = 0.0;
  bool nonfinite = false;  // action_kw was null, "NaN" or an infinity
  std::string message;
  std::string traceback;
};

/// Parses one reply line (without the newline). Throws ProtocolError quoting the line.
Reply parse_reply(std::string_view line);

}  // namespace aps::protocol
