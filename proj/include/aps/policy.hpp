#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "aps/error.hpp"
#include "aps/params.hpp"
#include "aps/simulator.hpp"

namespace aps {

/// Policy families of the sequential-decision taxonomy, kept as metadata on each policy.
enum class PolicyClass { PFA, CFA, VFA, DLA, Hybrid, Unknown };

const char* to_string(PolicyClass c);
PolicyClass policy_class_from_string(std::string_view s);

/// Outcome of a session teardown, also attached to failures raised during the handshake.
struct SessionReport {
  std::optional<int> exit_code;
  std::optional<int> term_signal;
  bool forced_kill = false;
  std::string failure_reason;
  double decision_seconds = 0.0;
  double peak_step_seconds = 0.0;
  int steps = 0;
  std::string stderr_text;
};

enum class FailureKind {
  LaunchFailure,
  HandshakeTimeout,
  MalformedAck,
  StepTimeout,
  MalformedFrame,
  PolicyException,
  ProcessExited,
};

const char* to_string(FailureKind k);

/// A policy could not produce an action. `step` is -1 for failures before the first state.
class PolicyFailure : public Error {
 public:
  PolicyFailure(FailureKind kind, std::string message, int step = -1, std::string stderr_text = {});

  FailureKind kind() const { return kind_; }
  int step() const { return step_; }
  void set_step(int step) { step_ = step; }
  const std::string& message() const { return message_; }
  const std::string& stderr_text() const { return stderr_; }
  /// Message plus captured standard error, the text handed to the repair prompt.
  std::string diagnostic() const;

  const std::optional<SessionReport>& report() const { return report_; }
  void attach_report(SessionReport r) { report_ = std::move(r); }

 private:
  FailureKind kind_;
  std::string message_;
  int step_;
  std::string stderr_;
  std::optional<SessionReport> report_;
};

struct NativeSpec {
  std::string id;  // "noop", "price-threshold", "self-consumption"
  std::map<std::string, double> parameters;
};

struct ExternalSpec {
  std::vector<std::string> runner;  // argv prefix; the candidate path is appended
  std::filesystem::path candidate;
};

struct PolicyHandle {
  std::variant<NativeSpec, ExternalSpec> descriptor;
  double per_step_timeout = 2.0;   // s
  double total_timeout = 120.0;    // s
  double shutdown_grace = 0.5;     // s
  PolicyClass policy_class = PolicyClass::Unknown;

  bool is_external() const { return std::holds_alternative<ExternalSpec>(descriptor); }
  static PolicyHandle native(std::string id, std::map<std::string, double> parameters = {});
  static PolicyHandle external(std::vector<std::string> runner, std::filesystem::path candidate);
};

class PolicySession {
 public:
  virtual ~PolicySession() = default;
  /// Requested battery power in kW (positive charges), before projection.
  virtual double query_action(const SystemState& state) = 0;
  virtual SessionReport shutdown() = 0;
};

/// Starts a session. External handles spawn the runner and complete the handshake.
std::unique_ptr<PolicySession> init_policy(const PolicyHandle& handle, const SystemParams& params);

struct BuiltinPolicyInfo {
  std::string id;
  std::string description;
  PolicyClass policy_class;
  std::map<std::string, double> default_parameters;
};

std::vector<BuiltinPolicyInfo> builtin_policies();

/// Runs one episode and always shuts the session down; on failure the session report is
/// attached to the rethrown PolicyFailure.
struct EpisodeResult {
  Trajectory trajectory;
  SessionReport report;
};
EpisodeResult evaluate_policy(const PolicyHandle& handle, const Scenario& scenario, const SystemParams& params);

}  // namespace aps
