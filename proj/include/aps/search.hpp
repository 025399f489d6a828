#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aps/benchmark.hpp"
#include "aps/codegen.hpp"
#include "aps/config.hpp"
#include "aps/llm.hpp"
#include "aps/results.hpp"

namespace aps::search {

using codegen::Mode;

/// What the meta level sees: aggregate metrics and the incumbent, never scenario series.
struct MetaState {
  std::vector<double> completed_costs;  // total cost of every successful iteration, in order
  std::optional<MetaMetrics> latest;    // metrics of the most recent successful iteration
  std::string incumbent_source;
  std::optional<double> best_cost;      // cost of the incumbent
  int iterations_done = 0;              // including restarted ones
};

/// Replays the greedy rule over the completed costs. Explore without any completed
/// iteration; refine right after an improvement of more than `epsilon` over the previous
/// best (the first completion counts as one); explore once `window` completed iterations in
/// a row failed to improve; otherwise keep refining.
Mode decide_mode(std::span<const double> completed_costs, int window, double epsilon);
Mode decide_mode(const MetaState& state, const SearchConfig& config);

std::string format_cost(double value);
std::string format_cost_history(std::span<const double> costs);

std::string build_meta_prompt(const MetaState& state, const std::string& incumbent_source, Mode mode);

enum class Role { Generation, Meta };

/// Creates the client for one role of one episode.
using ClientFactory = std::function<std::unique_ptr<llm::LlmClient>(Role role, int episode)>;

/// Scripted roles replay scripted_dir/generation and scripted_dir/meta; llm roles use HTTP.
ClientFactory default_client_factory(const RunConfig& config);

struct EpisodeContext {
  int episode_id = 0;
  Scenario scenario;
  SystemParams params;
  const SearchConfig* search = nullptr;
  std::filesystem::path run_dir;
  llm::LlmClient* generator = nullptr;
  llm::LlmClient* meta = nullptr;
  MetaState state;
};

/// One meta step: decide the mode, ask the meta generator for a task, generate, extract,
/// simulate, and repair up to max_repair_attempts times. Updates ctx.state on success.
/// Generator errors give outcome Failed.
IterationRecord run_iteration(int iteration, EpisodeContext& ctx);

struct AggregateRow {
  int iteration = 0;
  std::size_t n = 0;
  double median = 0.0, q1 = 0.0, q3 = 0.0, min = 0.0, max = 0.0;
};

/// Per-iteration statistics of total_cost over successful records, one row per iteration index.
std::vector<AggregateRow> aggregate(std::span<const IterationRecord> records, int iterations);
std::string aggregates_csv(std::span<const AggregateRow> rows);

struct BenchmarkEntry {
  std::uint64_t seed = 0;
  int steps = 0;
  double no_battery = 0.0;
  double finite_horizon = 0.0;
  double steady_state = 0.0;
};
nlohmann::json benchmarks_json(std::span<const BenchmarkEntry> entries);

struct RunSummary {
  bool complete = true;  // false if any episode aborted on a generator failure
  std::vector<IterationRecord> records;  // in persisted order
  std::vector<AggregateRow> aggregates;
  std::vector<BenchmarkEntry> benchmarks;
  llm::CostLedger generation_ledger;
  llm::CostLedger meta_ledger;
};

/// Scenario used by an episode: the configured CSV, or one generated from the system seed
/// (offset by the episode index under the per-episode policy).
Scenario episode_scenario(const RunConfig& config, int episode, SystemParams& params_out);

/// Runs every episode into `run_dir`, which must be absent or empty. Writes config.json
/// first, then iterations.jsonl, summary.csv, candidates/, aggregates.csv, benchmarks.json
/// and run_summary.json.
RunSummary run_search(const RunConfig& config, const std::filesystem::path& run_dir,
                      const ClientFactory& factory = {}, const std::string& command = "run");

}  // namespace aps::search
