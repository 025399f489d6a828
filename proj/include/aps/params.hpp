#pragma once

#include <cmath>
#include <cstdint>
#include <optional>

namespace aps {

/// Functional-form constants of the synthetic exogenous generators.
struct ProfileShape {
  double pv_window_start_h = 6.0;
  double pv_window_end_h = 18.0;
  double pv_noise_std = 0.10;  // relative
  double pv_noise_clip = 0.30;

  double morning_peak_h = 7.5;
  double morning_width_h = 1.0;
  double evening_peak_h = 19.0;
  double evening_width_h = 1.5;
  double load_noise_std_kw = 0.05;

  // m(h) = a1*sin(2pi(h - p1)/12) + a2*sin(2pi(h - p2)/24)
  double price_semidiurnal_amp = 0.15;
  double price_semidiurnal_phase_h = 5.0;
  double price_diurnal_amp = 0.05;
  double price_diurnal_phase_h = 13.0;
  double price_noise_clip_sigmas = 3.0;
};

/// Technical and economic parameters of the residential system. Defaults reproduce the
/// reference week: 10 kWh battery, 90 % round trip, 5 kWp PV, 7 days at hourly resolution.
struct SystemParams {
  double battery_capacity = 10.0;       // kWh
  double roundtrip_efficiency = 0.90;   // fraction
  std::optional<double> eta_override;   // one-way efficiency, replaces sqrt(roundtrip) when set
  double initial_soc_fraction = 0.50;
  double charge_max = 10.0;     // kW
  double discharge_max = 5.0;   // kW
  double dt_hours = 1.0;
  int horizon_steps = 168;
  double base_load = 0.25;      // kW
  double morning_peak = 1.25;   // kW
  double evening_peak = 2.25;   // kW
  double pv_nominal = 5.0;      // kWp
  double buy_price_mean = 0.35; // EUR/kWh
  double sell_price = 0.08;     // EUR/kWh
  double price_volatility = 0.10;
  std::uint64_t seed = 42;
  ProfileShape shape{};

  /// One-way efficiency applied on both charge and discharge.
  double eta_oneway() const {
    return eta_override ? *eta_override : std::sqrt(roundtrip_efficiency);
  }
  double initial_soc() const { return initial_soc_fraction * battery_capacity; }

  /// Throws ConfigError naming the first violated field.
  void validate() const;
};

}  // namespace aps
