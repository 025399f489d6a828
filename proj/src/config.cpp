#include "aps/config.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "aps/error.hpp"

#ifndef APS_VERSION
#define APS_VERSION "0.0.0"
#endif

namespace aps {

using json = nlohmann::json;

const char* version() { return APS_VERSION; }

const char* to_string(GeneratorKind k) { return k == GeneratorKind::Llm ? "llm" : "scripted"; }
const char* to_string(SeedPolicy s) { return s == SeedPolicy::Fixed ? "fixed" : "per-episode-offset"; }

void SearchConfig::validate() const {
  if (episodes < 1) throw ConfigError("search.episodes", "must be >= 1");
  if (iterations < 1) throw ConfigError("search.iterations", "must be >= 1");
  if (stagnation_window < 1) throw ConfigError("search.stagnation_window", "must be >= 1");
  if (!(improvement_epsilon >= 0.0)) throw ConfigError("search.improvement_epsilon", "must be >= 0");
  if (max_repair_attempts < 0) throw ConfigError("search.max_repair_attempts", "must be >= 0");
  if (parallel_episodes < 1) throw ConfigError("search.parallel_episodes", "must be >= 1");
  if (!(per_step_timeout > 0.0)) throw ConfigError("search.per_step_timeout", "must be > 0");
  if (!(total_timeout > 0.0)) throw ConfigError("search.total_timeout", "must be > 0");
  if (runner.empty() || runner.front().empty()) throw ConfigError("search.runner", "must name a program");
  const bool scripted = generator == GeneratorKind::Scripted || meta_generator == GeneratorKind::Scripted;
  if (scripted && scripted_dir.empty()) throw ConfigError("search.scripted_dir", "required for scripted generators");
}

json to_json(const SystemParams& p) {
  const auto& s = p.shape;
  return {{"battery_capacity", p.battery_capacity},
          {"roundtrip_efficiency", p.roundtrip_efficiency},
          {"eta_override", p.eta_override ? json(*p.eta_override) : json(nullptr)},
          {"initial_soc_fraction", p.initial_soc_fraction},
          {"charge_max", p.charge_max},
          {"discharge_max", p.discharge_max},
          {"dt_hours", p.dt_hours},
          {"horizon_steps", p.horizon_steps},
          {"base_load", p.base_load},
          {"morning_peak", p.morning_peak},
          {"evening_peak", p.evening_peak},
          {"pv_nominal", p.pv_nominal},
          {"buy_price_mean", p.buy_price_mean},
          {"sell_price", p.sell_price},
          {"price_volatility", p.price_volatility},
          {"seed", p.seed},
          {"shape",
           {{"pv_window_start_h", s.pv_window_start_h},
            {"pv_window_end_h", s.pv_window_end_h},
            {"pv_noise_std", s.pv_noise_std},
            {"pv_noise_clip", s.pv_noise_clip},
            {"morning_peak_h", s.morning_peak_h},
            {"morning_width_h", s.morning_width_h},
            {"evening_peak_h", s.evening_peak_h},
            {"evening_width_h", s.evening_width_h},
            {"load_noise_std_kw", s.load_noise_std_kw},
            {"price_semidiurnal_amp", s.price_semidiurnal_amp},
            {"price_semidiurnal_phase_h", s.price_semidiurnal_phase_h},
            {"price_diurnal_amp", s.price_diurnal_amp},
            {"price_diurnal_phase_h", s.price_diurnal_phase_h},
            {"price_noise_clip_sigmas", s.price_noise_clip_sigmas}}}};
}

json to_json(const SearchConfig& c) {
  return {{"episodes", c.episodes},
          {"iterations", c.iterations},
          {"stagnation_window", c.stagnation_window},
          {"improvement_epsilon", c.improvement_epsilon},
          {"max_repair_attempts", c.max_repair_attempts},
          {"generator", to_string(c.generator)},
          {"meta_generator", to_string(c.meta_generator)},
          {"scripted_dir", c.scripted_dir.string()},
          {"seed_policy", to_string(c.seed_policy)},
          {"parallel_episodes", c.parallel_episodes},
          {"runner", c.runner},
          {"per_step_timeout", c.per_step_timeout},
          {"total_timeout", c.total_timeout},
          {"scenario_file", c.scenario_file.string()}};
}

json to_json(const llm::EndpointConfig& e) {
  return {{"base_url", e.base_url},
          {"model_id", e.model_id},
          {"temperature", e.temperature},
          {"top_p", e.top_p},
          {"top_k", e.top_k},
          {"candidate_count", e.candidate_count},
          {"max_output_tokens", e.max_output_tokens},
          {"request_timeout", e.request_timeout},
          {"max_retries", e.max_retries},
          {"backoff_initial", e.backoff_initial},
          {"api_key_env_var", e.api_key_env_var},
          {"input_price_per_m", e.input_price_per_m},
          {"output_price_per_m", e.output_price_per_m}};
}

json to_json(const RunConfig& c) {
  return {{"system", to_json(c.system)}, {"search", to_json(c.search)}, {"endpoint", to_json(c.endpoint)}};
}

namespace {

// Field readers that name the offending path.
struct Reader {
  const json& obj;
  const std::string& path;

  std::string at(const std::string& key) const { return path + "." + key; }

  template <typename T>
  void number(const char* key, T& out) const {
    if (!obj.contains(key)) return;
    const auto& v = obj[key];
    if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(at(key), "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && !v.is_number_unsigned()) throw ConfigError(at(key), "expected a non-negative integer");
      }
    } else {
      if (!v.is_number()) throw ConfigError(at(key), "expected a number");
    }
    out = v.get<T>();
  }

  void string(const char* key, std::string& out) const {
    if (!obj.contains(key)) return;
    if (!obj[key].is_string()) throw ConfigError(at(key), "expected a string");
    out = obj[key].get<std::string>();
  }

  void check_known(std::initializer_list<const char*> keys) const {
    if (!obj.is_object()) throw ConfigError(path, "expected an object");
    for (const auto& [k, v] : obj.items()) {
      bool known = false;
      for (const char* key : keys) known = known || k == key;
      if (!known) throw ConfigError(at(k), "unknown field");
    }
  }
};

GeneratorKind generator_kind(const json& v, const std::string& path) {
  if (v == "llm") return GeneratorKind::Llm;
  if (v == "scripted") return GeneratorKind::Scripted;
  throw ConfigError(path, "expected \"llm\" or \"scripted\"");
}

}  // namespace

void apply_json(const json& j, SystemParams& p, const std::string& path) {
  Reader r{j, path};
  r.check_known({"battery_capacity", "roundtrip_efficiency", "eta_override", "initial_soc_fraction", "charge_max",
                 "discharge_max", "dt_hours", "horizon_steps", "base_load", "morning_peak", "evening_peak",
                 "pv_nominal", "buy_price_mean", "sell_price", "price_volatility", "seed", "shape"});
  r.number("battery_capacity", p.battery_capacity);
  r.number("roundtrip_efficiency", p.roundtrip_efficiency);
  if (j.contains("eta_override")) {
    if (j["eta_override"].is_null()) {
      p.eta_override.reset();
    } else {
      double eta = 0.0;
      r.number("eta_override", eta);
      p.eta_override = eta;
    }
  }
  r.number("initial_soc_fraction", p.initial_soc_fraction);
  r.number("charge_max", p.charge_max);
  r.number("discharge_max", p.discharge_max);
  r.number("dt_hours", p.dt_hours);
  r.number("horizon_steps", p.horizon_steps);
  r.number("base_load", p.base_load);
  r.number("morning_peak", p.morning_peak);
  r.number("evening_peak", p.evening_peak);
  r.number("pv_nominal", p.pv_nominal);
  r.number("buy_price_mean", p.buy_price_mean);
  r.number("sell_price", p.sell_price);
  r.number("price_volatility", p.price_volatility);
  r.number("seed", p.seed);
  if (j.contains("shape")) {
    const std::string sp = path + ".shape";
    Reader s{j["shape"], sp};
    auto& sh = p.shape;
    s.check_known({"pv_window_start_h", "pv_window_end_h", "pv_noise_std", "pv_noise_clip", "morning_peak_h",
                   "morning_width_h", "evening_peak_h", "evening_width_h", "load_noise_std_kw",
                   "price_semidiurnal_amp", "price_semidiurnal_phase_h", "price_diurnal_amp", "price_diurnal_phase_h",
                   "price_noise_clip_sigmas"});
    s.number("pv_window_start_h", sh.pv_window_start_h);
    s.number("pv_window_end_h", sh.pv_window_end_h);
    s.number("pv_noise_std", sh.pv_noise_std);
    s.number("pv_noise_clip", sh.pv_noise_clip);
    s.number("morning_peak_h", sh.morning_peak_h);
    s.number("morning_width_h", sh.morning_width_h);
    s.number("evening_peak_h", sh.evening_peak_h);
    s.number("evening_width_h", sh.evening_width_h);
    s.number("load_noise_std_kw", sh.load_noise_std_kw);
    s.number("price_semidiurnal_amp", sh.price_semidiurnal_amp);
    s.number("price_semidiurnal_phase_h", sh.price_semidiurnal_phase_h);
    s.number("price_diurnal_amp", sh.price_diurnal_amp);
    s.number("price_diurnal_phase_h", sh.price_diurnal_phase_h);
    s.number("price_noise_clip_sigmas", sh.price_noise_clip_sigmas);
  }
}

void apply_json(const json& j, SearchConfig& c, const std::string& path) {
  Reader r{j, path};
  r.check_known({"episodes", "iterations", "stagnation_window", "improvement_epsilon", "max_repair_attempts",
                 "generator", "meta_generator", "scripted_dir", "seed_policy", "parallel_episodes", "runner",
                 "per_step_timeout", "total_timeout", "scenario_file"});
  r.number("episodes", c.episodes);
  r.number("iterations", c.iterations);
  r.number("stagnation_window", c.stagnation_window);
  r.number("improvement_epsilon", c.improvement_epsilon);
  r.number("max_repair_attempts", c.max_repair_attempts);
  if (j.contains("generator")) c.generator = generator_kind(j["generator"], r.at("generator"));
  if (j.contains("meta_generator")) c.meta_generator = generator_kind(j["meta_generator"], r.at("meta_generator"));
  std::string s = c.scripted_dir.string();
  r.string("scripted_dir", s);
  c.scripted_dir = s;
  if (j.contains("seed_policy")) {
    const auto& v = j["seed_policy"];
    if (v == "fixed") c.seed_policy = SeedPolicy::Fixed;
    else if (v == "per-episode-offset") c.seed_policy = SeedPolicy::PerEpisodeOffset;
    else throw ConfigError(r.at("seed_policy"), "expected \"fixed\" or \"per-episode-offset\"");
  }
  r.number("parallel_episodes", c.parallel_episodes);
  if (j.contains("runner")) {
    const auto& v = j["runner"];
    if (!v.is_array()) throw ConfigError(r.at("runner"), "expected an array of strings");
    c.runner.clear();
    for (const auto& a : v) {
      if (!a.is_string()) throw ConfigError(r.at("runner"), "expected an array of strings");
      c.runner.push_back(a.get<std::string>());
    }
  }
  r.number("per_step_timeout", c.per_step_timeout);
  r.number("total_timeout", c.total_timeout);
  std::string sf = c.scenario_file.string();
  r.string("scenario_file", sf);
  c.scenario_file = sf;
}

void apply_json(const json& j, llm::EndpointConfig& e, const std::string& path) {
  Reader r{j, path};
  r.check_known({"base_url", "model_id", "temperature", "top_p", "top_k", "candidate_count", "max_output_tokens",
                 "request_timeout", "max_retries", "backoff_initial", "api_key_env_var", "input_price_per_m",
                 "output_price_per_m"});
  r.string("base_url", e.base_url);
  r.string("model_id", e.model_id);
  r.number("temperature", e.temperature);
  r.number("top_p", e.top_p);
  r.number("top_k", e.top_k);
  r.number("candidate_count", e.candidate_count);
  r.number("max_output_tokens", e.max_output_tokens);
  r.number("request_timeout", e.request_timeout);
  r.number("max_retries", e.max_retries);
  r.number("backoff_initial", e.backoff_initial);
  r.string("api_key_env_var", e.api_key_env_var);
  r.number("input_price_per_m", e.input_price_per_m);
  r.number("output_price_per_m", e.output_price_per_m);
}

void apply_json(const json& j, RunConfig& c) {
  if (!j.is_object()) throw ConfigError("", "config must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (k == "system") apply_json(v, c.system);
    else if (k == "search") apply_json(v, c.search);
    else if (k == "endpoint") apply_json(v, c.endpoint);
    else if (k == "tool" || k == "version" || k == "created_utc" || k == "command") continue;  // manifest metadata
    else throw ConfigError(k, "unknown field");
  }
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("line " + std::to_string(line) + ", column " + std::to_string(col), "invalid JSON");
  }
  apply_json(j, base);
  base.system.validate();
  base.search.validate();
  base.endpoint.validate();
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config", "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

json make_manifest(const RunConfig& c, const std::string& command) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  json j = to_json(c);
  j["tool"] = "aps";
  j["version"] = version();
  j["created_utc"] = buf;
  j["command"] = command;
  return j;
}

}  // namespace aps
