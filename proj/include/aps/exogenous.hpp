#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "aps/params.hpp"
#include "aps/rng.hpp"

namespace aps {

/// One full realization of the exogenous series over the horizon.
struct Scenario {
  std::vector<double> hour_of_day;
  std::vector<double> pv;          // kW
  std::vector<double> load;        // kW
  std::vector<double> buy_price;   // EUR/kWh
  std::vector<double> sell_price;  // EUR/kWh, constant
  std::uint64_t seed = 0;

  std::size_t size() const { return pv.size(); }
  /// Throws ConfigError if series lengths disagree or values break the bounds.
  void validate() const;
};

// Noiseless shapes. `hour` is the hour of day in [0, 24).
double pv_base(double hour, const SystemParams& params);
double load_base(double hour, const SystemParams& params);
/// Zero-mean multiplicative price modulation m(h).
double price_shape(double hour, const SystemParams& params);

// Noisy samples; each call consumes the documented number of draws from `rng`.
double pv_profile(double hour, Rng& rng, const SystemParams& params);
double load_profile(double hour, Rng& rng, const SystemParams& params);
double price_profile(double hour, Rng& rng, const SystemParams& params);

double hour_of_day(int step, const SystemParams& params);

/// Draws the whole horizon from one Rng seeded with params.seed. Per step the order is
/// PV noise, load noise, price noise.
Scenario generate_scenario(const SystemParams& params);

/// CSV with header `t,hour,pv_kw,load_kw,buy_price,sell_price`, shortest round-trip decimals.
void write_scenario_csv(const Scenario& scenario, std::ostream& out);
void write_scenario_csv(const Scenario& scenario, const std::filesystem::path& path);
Scenario read_scenario_csv(std::istream& in);
Scenario read_scenario_csv(const std::filesystem::path& path);

}  // namespace aps
