#include "aps/exogenous.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "aps/error.hpp"
#include "aps/util.hpp"

namespace aps {
namespace {

constexpr const char* kCsvHeader = "t,hour,pv_kw,load_kw,buy_price,sell_price";

double gauss(double h, double mu, double sigma) {
  const double z = (h - mu) / sigma;
  return std::exp(-0.5 * z * z);
}

}  // namespace

void Scenario::validate() const {
  const auto n = pv.size();
  if (load.size() != n || buy_price.size() != n || sell_price.size() != n || hour_of_day.size() != n) {
    throw ConfigError("scenario", "series lengths differ");
  }
  for (std::size_t t = 0; t < n; ++t) {
    if (!(pv[t] >= 0.0) || !(load[t] >= 0.0) || !(buy_price[t] >= 0.0) || !(sell_price[t] >= 0.0) ||
        !std::isfinite(pv[t] + load[t] + buy_price[t] + sell_price[t])) {
      throw ConfigError("scenario", "negative or non-finite value at t=" + std::to_string(t));
    }
  }
}

double hour_of_day(int step, const SystemParams& params) {
  return std::fmod(static_cast<double>(step) * params.dt_hours, 24.0);
}

double pv_base(double hour, const SystemParams& params) {
  const auto& s = params.shape;
  if (hour < s.pv_window_start_h || hour > s.pv_window_end_h) return 0.0;
  const double phase = std::numbers::pi * (hour - s.pv_window_start_h) /
                       (s.pv_window_end_h - s.pv_window_start_h);
  return params.pv_nominal * std::max(0.0, std::sin(phase));
}

double load_base(double hour, const SystemParams& params) {
  const auto& s = params.shape;
  return params.base_load +
         (params.morning_peak - params.base_load) * gauss(hour, s.morning_peak_h, s.morning_width_h) +
         (params.evening_peak - params.base_load) * gauss(hour, s.evening_peak_h, s.evening_width_h);
}

double price_shape(double hour, const SystemParams& params) {
  const auto& s = params.shape;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  return s.price_semidiurnal_amp * std::sin(two_pi * (hour - s.price_semidiurnal_phase_h) / 12.0) +
         s.price_diurnal_amp * std::sin(two_pi * (hour - s.price_diurnal_phase_h) / 24.0);
}

double pv_profile(double hour, Rng& rng, const SystemParams& params) {
  const double eps = rng.truncated_normal(params.shape.pv_noise_std, params.shape.pv_noise_clip);
  return std::clamp(pv_base(hour, params) * (1.0 + eps), 0.0, params.pv_nominal);
}

double load_profile(double hour, Rng& rng, const SystemParams& params) {
  const double nu = params.shape.load_noise_std_kw * rng.normal();
  return std::max(0.0, load_base(hour, params) + nu);
}

double price_profile(double hour, Rng& rng, const SystemParams& params) {
  const double sigma = params.price_volatility;
  const double eps = rng.truncated_normal(sigma, params.shape.price_noise_clip_sigmas * sigma);
  return std::max(0.0, params.buy_price_mean * (1.0 + price_shape(hour, params)) * (1.0 + eps));
}

Scenario generate_scenario(const SystemParams& params) {
  params.validate();
  const auto n = static_cast<std::size_t>(params.horizon_steps);
  Scenario sc;
  sc.seed = params.seed;
  sc.hour_of_day.reserve(n);
  sc.pv.reserve(n);
  sc.load.reserve(n);
  sc.buy_price.reserve(n);
  sc.sell_price.assign(n, params.sell_price);

  Rng rng(params.seed);
  for (int t = 0; t < params.horizon_steps; ++t) {
    const double h = hour_of_day(t, params);
    sc.hour_of_day.push_back(h);
    sc.pv.push_back(pv_profile(h, rng, params));
    sc.load.push_back(load_profile(h, rng, params));
    sc.buy_price.push_back(price_profile(h, rng, params));
  }
  return sc;
}

void write_scenario_csv(const Scenario& scenario, std::ostream& out) {
  using util::format_double;
  out << kCsvHeader << '\n';
  for (std::size_t t = 0; t < scenario.size(); ++t) {
    out << t << ',' << format_double(scenario.hour_of_day[t]) << ',' << format_double(scenario.pv[t])
        << ',' << format_double(scenario.load[t]) << ',' << format_double(scenario.buy_price[t]) << ','
        << format_double(scenario.sell_price[t]) << '\n';
  }
}

void write_scenario_csv(const Scenario& scenario, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_scenario_csv(scenario, out);
  if (!out) throw IoError("write failed: " + path.string());
}

Scenario read_scenario_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || util::trim(line) != kCsvHeader) {
    throw ConfigError("scenario:1", std::string("expected header '") + kCsvHeader + "'");
  }
  Scenario sc;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (util::trim(line).empty()) continue;
    const auto cols = util::split(util::trim(line), ',');
    const std::string where = "scenario:" + std::to_string(lineno);
    if (cols.size() != 6) throw ConfigError(where, "expected 6 columns");
    try {
      const double t = util::parse_double(cols[0]);
      if (t != static_cast<double>(sc.size())) throw ConfigError(where, "t column out of sequence");
      sc.hour_of_day.push_back(util::parse_double(cols[1]));
      sc.pv.push_back(util::parse_double(cols[2]));
      sc.load.push_back(util::parse_double(cols[3]));
      sc.buy_price.push_back(util::parse_double(cols[4]));
      sc.sell_price.push_back(util::parse_double(cols[5]));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where, e.what());
    }
  }
  sc.validate();
  return sc;
}

Scenario read_scenario_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_scenario_csv(in);
}

}  // namespace aps
