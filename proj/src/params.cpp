#include "aps/params.hpp"

#include "aps/error.hpp"

namespace aps {
namespace {

void require(bool ok, const char* field, const char* what) {
  if (!ok) throw ConfigError(field, what);
}

}  // namespace

void SystemParams::validate() const {
  // Zero capacity and zero power limits are accepted: they describe the degenerate
  // battery used to cross-check the benchmarks against the no-battery cost.
  require(std::isfinite(battery_capacity) && battery_capacity >= 0.0, "battery_capacity", "must be >= 0");
  require(roundtrip_efficiency > 0.0 && roundtrip_efficiency <= 1.0, "roundtrip_efficiency",
          "must lie in (0, 1]");
  if (eta_override) {
    require(*eta_override > 0.0 && *eta_override <= 1.0, "eta_oneway", "must lie in (0, 1]");
  }
  require(initial_soc_fraction >= 0.0 && initial_soc_fraction <= 1.0, "initial_soc_fraction",
          "must lie in [0, 1]");
  require(std::isfinite(charge_max) && charge_max >= 0.0, "charge_max", "must be >= 0");
  require(std::isfinite(discharge_max) && discharge_max >= 0.0, "discharge_max", "must be >= 0");
  require(std::isfinite(dt_hours) && dt_hours > 0.0, "dt_hours", "must be > 0");
  require(horizon_steps >= 1, "horizon_steps", "must be >= 1");
  require(base_load >= 0.0 && morning_peak >= 0.0 && evening_peak >= 0.0, "base_load",
          "load levels must be >= 0");
  require(pv_nominal >= 0.0, "pv_nominal", "must be >= 0");
  require(buy_price_mean > 0.0, "buy_price_mean", "must be > 0");
  require(sell_price >= 0.0, "sell_price", "must be >= 0");
  require(price_volatility >= 0.0, "price_volatility", "must be >= 0");
  require(shape.morning_width_h > 0.0 && shape.evening_width_h > 0.0, "shape",
          "peak widths must be > 0");
  require(shape.pv_window_end_h > shape.pv_window_start_h, "shape", "empty PV window");
  require(shape.pv_noise_std >= 0.0 && shape.load_noise_std_kw >= 0.0, "shape",
          "noise std must be >= 0");
}

}  // namespace aps
