#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aps/llm.hpp"
#include "aps/params.hpp"

namespace aps {

enum class GeneratorKind { Llm, Scripted };
const char* to_string(GeneratorKind k);

enum class SeedPolicy { Fixed, PerEpisodeOffset };
const char* to_string(SeedPolicy s);

struct SearchConfig {
  int episodes = 20;
  int iterations = 10;  // I + 1 meta steps per episode
  int stagnation_window = 3;
  double improvement_epsilon = 0.01;  // EUR
  int max_repair_attempts = 5;
  GeneratorKind generator = GeneratorKind::Llm;
  GeneratorKind meta_generator = GeneratorKind::Llm;
  std::filesystem::path scripted_dir;  // holds generation/ and meta/
  SeedPolicy seed_policy = SeedPolicy::Fixed;
  int parallel_episodes = 1;
  std::vector<std::string> runner{"aps-policy-shim"};  // argv prefix for external candidates
  double per_step_timeout = 2.0;
  double total_timeout = 120.0;
  std::filesystem::path scenario_file;  // optional CSV replacing the generated scenario

  void validate() const;
};

/// Everything a run needs. Read from and written as a single JSON document.
struct RunConfig {
  SystemParams system;
  SearchConfig search;
  llm::EndpointConfig endpoint;
};

nlohmann::json to_json(const SystemParams& p);
nlohmann::json to_json(const SearchConfig& c);
nlohmann::json to_json(const llm::EndpointConfig& e);
nlohmann::json to_json(const RunConfig& c);

/// Overlays the fields present in `j` onto `out`. Unknown fields and wrong types throw
/// ConfigError naming the field path (e.g. "system.battery_capacity").
void apply_json(const nlohmann::json& j, SystemParams& out, const std::string& path = "system");
void apply_json(const nlohmann::json& j, SearchConfig& out, const std::string& path = "search");
void apply_json(const nlohmann::json& j, llm::EndpointConfig& out, const std::string& path = "endpoint");
void apply_json(const nlohmann::json& j, RunConfig& out);

/// Parses a config document. Syntax errors report "line L, column C".
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// Manifest: the resolved configuration plus tool name, version and creation time. The
/// API key itself is never stored, only the name of its environment variable.
nlohmann::json make_manifest(const RunConfig& c, const std::string& command);

const char* version();

}  // namespace aps
