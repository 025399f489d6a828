#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aps/codegen.hpp"
#include "aps/error.hpp"
#include "aps/exogenous.hpp"
#include "aps/policy.hpp"
#include "aps/simulator.hpp"

namespace aps {

inline constexpr double kActiveThresholdKw = 0.01;
inline constexpr std::size_t kCostHistoryLength = 5;

enum class FailureCategory { Extraction, Launch, Protocol, Exception, Timeout, NonfiniteAction };
const char* to_string(FailureCategory c);
FailureCategory failure_category_from_string(std::string_view s);

struct Diagnostic {
  FailureCategory category = FailureCategory::Exception;
  std::string message;  // verbatim text for the repair prompt
  int step = -1;

  bool operator==(const Diagnostic&) const = default;
};

Diagnostic classify_failure(const PolicyFailure& failure);
Diagnostic classify_failure(const codegen::ExtractionError& error);

struct MetaMetrics {
  double total_cost = 0.0;
  double best_cost = 0.0;
  int iteration_count = 0;
  double utilization = 0.0;  // percent
  double avg_soc = 0.0;      // kWh
  double avg_soc_fraction = 0.0;
  double price_volatility = 0.0;
  std::vector<double> cost_history;  // most recent last
  double policy_runtime_seconds = 0.0;  // not serialized into iterations.jsonl
  std::optional<Diagnostic> failure;    // non-fatal issues of a completed run

  bool operator==(const MetaMetrics&) const = default;
};

enum class Outcome { Success, Restarted, Failed };
const char* to_string(Outcome o);
Outcome outcome_from_string(std::string_view s);

inline constexpr const char* kSchemaVersion = "1.0";
inline constexpr int kSchemaMajor = 1;

struct IterationRecord {
  int episode_id = 0;
  int iteration = 0;
  codegen::Mode mode = codegen::Mode::Explore;
  std::string task_description;
  std::string candidate_hash;  // empty when nothing could be extracted
  PolicyClass policy_class = PolicyClass::Unknown;
  std::optional<MetaMetrics> metrics;  // present iff outcome == Success
  int repair_attempts = 0;
  Outcome outcome = Outcome::Success;
  std::vector<Diagnostic> diagnostics;  // one per failed attempt

  bool operator==(const IterationRecord&) const = default;
};

double price_volatility(std::span<const double> prices);

/// `prior_costs` are the total costs of earlier successful iterations of the episode,
/// `iteration_count` the 1-based index of this iteration.
MetaMetrics compute_metrics(const Trajectory& traj, const Scenario& scenario, const SystemParams& params,
                            std::span<const double> prior_costs, int iteration_count);

/// Convenience overload deriving prior costs and the iteration count from earlier records.
MetaMetrics compute_metrics(const Trajectory& traj, const Scenario& scenario, const SystemParams& params,
                            std::span<const IterationRecord> history);

class SchemaVersionError : public Error {
 public:
  using Error::Error;
};

std::string to_json_line(const IterationRecord& record);
IterationRecord from_json_line(std::string_view line);

/// Writes candidates/<hash>.txt once; returns its path.
std::filesystem::path write_candidate(const std::filesystem::path& run_dir, const std::string& hash,
                                      const std::string& source);

/// Appends the record to iterations.jsonl and a row to summary.csv, flushing each to disk.
void persist(const IterationRecord& record, const std::filesystem::path& run_dir);

std::vector<IterationRecord> read_records(const std::filesystem::path& run_dir);

/// Reads a candidate's policy-class annotation ("# policy-class: CFA"); Unknown if absent.
PolicyClass policy_class_annotation(std::string_view source);

}  // namespace aps
