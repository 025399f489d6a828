#include "aps/policy.hpp"

#include <chrono>
#include <cmath>

#include "aps/protocol.hpp"
#include "aps/subprocess.hpp"
#include "aps/util.hpp"

namespace aps {

const char* to_string(PolicyClass c) {
  switch (c) {
    case PolicyClass::PFA: return "PFA";
    case PolicyClass::CFA: return "CFA";
    case PolicyClass::VFA: return "VFA";
    case PolicyClass::DLA: return "DLA";
    case PolicyClass::Hybrid: return "hybrid";
    case PolicyClass::Unknown: return "unknown";
  }
  return "unknown";
}

PolicyClass policy_class_from_string(std::string_view s) {
  if (s == "PFA") return PolicyClass::PFA;
  if (s == "CFA") return PolicyClass::CFA;
  if (s == "VFA") return PolicyClass::VFA;
  if (s == "DLA") return PolicyClass::DLA;
  if (s == "hybrid") return PolicyClass::Hybrid;
  return PolicyClass::Unknown;
}

const char* to_string(FailureKind k) {
  switch (k) {
    case FailureKind::LaunchFailure: return "LaunchFailure";
    case FailureKind::HandshakeTimeout: return "HandshakeTimeout";
    case FailureKind::MalformedAck: return "MalformedAck";
    case FailureKind::StepTimeout: return "StepTimeout";
    case FailureKind::MalformedFrame: return "MalformedFrame";
    case FailureKind::PolicyException: return "PolicyException";
    case FailureKind::ProcessExited: return "ProcessExited";
  }
  return "?";
}

PolicyFailure::PolicyFailure(FailureKind kind, std::string message, int step, std::string stderr_text)
    : Error(message), kind_(kind), message_(std::move(message)), step_(step), stderr_(std::move(stderr_text)) {}

std::string PolicyFailure::diagnostic() const {
  std::string d = message_;
  if (!util::trim(stderr_).empty()) {
    d += "\n--- standard error ---\n";
    d += stderr_;
  }
  return d;
}

PolicyHandle PolicyHandle::native(std::string id, std::map<std::string, double> parameters) {
  PolicyHandle h;
  h.descriptor = NativeSpec{std::move(id), std::move(parameters)};
  h.policy_class = PolicyClass::PFA;
  return h;
}

PolicyHandle PolicyHandle::external(std::vector<std::string> runner, std::filesystem::path candidate) {
  PolicyHandle h;
  h.descriptor = ExternalSpec{std::move(runner), std::move(candidate)};
  return h;
}

std::vector<BuiltinPolicyInfo> builtin_policies() {
  return {
      {"noop", "never uses the battery", PolicyClass::PFA, {}},
      {"price-threshold",
       "charge at full power below `low`, discharge at full power above `high`",
       PolicyClass::PFA,
       {{"low", 0.30}, {"high", 0.40}}},
      {"self-consumption", "store PV surplus, cover deficits from the battery, no grid trading",
       PolicyClass::PFA, {}},
  };
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

class NativeSession : public PolicySession {
 public:
  SessionReport shutdown() override {
    SessionReport r;
    r.exit_code = 0;
    r.decision_seconds = decision_seconds_;
    r.peak_step_seconds = peak_;
    r.steps = steps_;
    return r;
  }

  double query_action(const SystemState& state) override {
    const auto t0 = Clock::now();
    const double x = decide(state);
    const double dt = seconds_since(t0);
    decision_seconds_ += dt;
    peak_ = std::max(peak_, dt);
    ++steps_;
    return x;
  }

 protected:
  virtual double decide(const SystemState& state) = 0;

 private:
  double decision_seconds_ = 0.0;
  double peak_ = 0.0;
  int steps_ = 0;
};

class NoOpPolicy final : public NativeSession {
 protected:
  double decide(const SystemState&) override { return 0.0; }
};

class PriceThresholdPolicy final : public NativeSession {
 public:
  PriceThresholdPolicy(double low, double high, const SystemParams& p)
      : low_(low), high_(high), charge_max_(p.charge_max), discharge_max_(p.discharge_max),
        capacity_(p.battery_capacity) {}

 protected:
  double decide(const SystemState& s) override {
    constexpr double kTol = 1e-9;
    if (s.buy_price < low_ && s.soc < capacity_ - kTol) return charge_max_;
    // The grid takes any export, so a discharge is always absorbed by demand or export.
    if (s.buy_price > high_ && s.soc > kTol) return -discharge_max_;
    return 0.0;
  }

 private:
  double low_, high_, charge_max_, discharge_max_, capacity_;
};

class SelfConsumptionPolicy final : public NativeSession {
 public:
  explicit SelfConsumptionPolicy(const SystemParams& p) : charge_max_(p.charge_max), discharge_max_(p.discharge_max) {}

 protected:
  double decide(const SystemState& s) override {
    const double surplus = s.pv - s.load;
    if (surplus > 0.0) return std::min(surplus, charge_max_);
    if (surplus < 0.0) return -std::min(-surplus, discharge_max_);
    return 0.0;
  }

 private:
  double charge_max_, discharge_max_;
};

double param_or(const NativeSpec& spec, const std::string& key, double fallback) {
  const auto it = spec.parameters.find(key);
  return it == spec.parameters.end() ? fallback : it->second;
}

std::unique_ptr<PolicySession> make_native(const NativeSpec& spec, const SystemParams& params) {
  if (spec.id == "noop") return std::make_unique<NoOpPolicy>();
  if (spec.id == "price-threshold") {
    return std::make_unique<PriceThresholdPolicy>(param_or(spec, "low", 0.30), param_or(spec, "high", 0.40), params);
  }
  if (spec.id == "self-consumption") return std::make_unique<SelfConsumptionPolicy>(params);
  throw ConfigError("policy", "unknown built-in policy '" + spec.id + "'");
}

std::string fmt_seconds(double s) { return util::format_double(s) + " s"; }

class ExternalSession final : public PolicySession {
 public:
  ExternalSession(const PolicyHandle& handle, const ExternalSpec& spec, const SystemParams& params)
      : handle_(handle), capacity_(params.battery_capacity) {
    if (!std::filesystem::exists(spec.candidate)) {
      fail_launch("candidate file not found: " + spec.candidate.string());
    }
    std::vector<std::string> argv = spec.runner;
    argv.push_back(spec.candidate.string());
    try {
      proc_.emplace(Subprocess::spawn(argv));
    } catch (const LaunchError& e) {
      fail_launch(e.what());
    }
    started_ = Clock::now();

    const auto deadline = step_deadline();
    if (!proc_->write_all(protocol::init_frame(params) + "\n", deadline)) {
      fail_handshake(FailureKind::HandshakeTimeout, "policy process did not accept the init frame");
    }
    std::string line;
    switch (proc_->read_line(line, deadline)) {
      case Subprocess::ReadStatus::Timeout:
        fail_handshake(FailureKind::HandshakeTimeout,
                       "no acknowledgement of the init frame within " + fmt_seconds(handle_.per_step_timeout));
      case Subprocess::ReadStatus::Eof:
        fail_handshake(FailureKind::ProcessExited, "policy process exited during the handshake" + exit_suffix());
      case Subprocess::ReadStatus::Overflow:
        fail_handshake(FailureKind::MalformedAck, "oversized handshake line: \"" + line + "...\"");
      case Subprocess::ReadStatus::Line:
        break;
    }
    protocol::Reply reply;
    try {
      reply = protocol::parse_reply(line);
    } catch (const protocol::ProtocolError& e) {
      fail_handshake(FailureKind::MalformedAck, std::string("malformed acknowledgement: ") + e.what());
    }
    if (reply.kind == protocol::Reply::Kind::Error) {
      fail_handshake(FailureKind::PolicyException, error_text(reply));
    }
    if (reply.kind != protocol::Reply::Kind::Ack) {
      fail_handshake(FailureKind::MalformedAck, "expected an ack frame, got: \"" + line + "\"");
    }
  }

  ~ExternalSession() override {
    if (proc_ && !shut_down_) proc_->kill_and_wait();
  }

  double query_action(const SystemState& state) override {
    if (failed_) throw PolicyFailure(FailureKind::ProcessExited, "session already failed", state.t);
    const auto t0 = Clock::now();
    const auto deadline = step_deadline();
    const std::string step_name = "step " + std::to_string(state.t);

    if (!proc_->write_all(protocol::state_frame(state, capacity_) + "\n", deadline)) {
      if (Clock::now() >= deadline) fail_step(FailureKind::StepTimeout, timeout_text(step_name), state.t);
      fail_step(FailureKind::ProcessExited, "policy process stopped reading input at " + step_name + exit_suffix(),
                state.t);
    }
    std::string line;
    switch (proc_->read_line(line, deadline)) {
      case Subprocess::ReadStatus::Timeout:
        fail_step(FailureKind::StepTimeout, timeout_text(step_name), state.t);
      case Subprocess::ReadStatus::Eof:
        fail_step(FailureKind::ProcessExited, "policy process exited at " + step_name + exit_suffix(), state.t);
      case Subprocess::ReadStatus::Overflow:
        fail_step(FailureKind::MalformedFrame, "oversized frame at " + step_name + ": \"" + line + "...\"", state.t);
      case Subprocess::ReadStatus::Line:
        break;
    }
    protocol::Reply reply;
    try {
      reply = protocol::parse_reply(line);
    } catch (const protocol::ProtocolError& e) {
      fail_step(FailureKind::MalformedFrame, "malformed frame at " + step_name + ": " + e.what(), state.t);
    }
    if (reply.kind == protocol::Reply::Kind::Error) {
      fail_step(FailureKind::PolicyException, error_text(reply), state.t);
    }
    if (reply.kind != protocol::Reply::Kind::Action) {
      fail_step(FailureKind::MalformedFrame, "expected an action frame at " + step_name + ", got: \"" + line + "\"",
                state.t);
    }
    const double dt = seconds_since(t0);
    decision_seconds_ += dt;
    peak_ = std::max(peak_, dt);
    ++steps_;
    return reply.action_kw;
  }

  SessionReport shutdown() override {
    SessionReport r;
    r.decision_seconds = decision_seconds_;
    r.peak_step_seconds = peak_;
    r.steps = steps_;
    r.failure_reason = failure_reason_;
    if (proc_ && !shut_down_) {
      shut_down_ = true;
      const auto grace = Clock::now() + to_duration(handle_.shutdown_grace);
      proc_->write_all(protocol::shutdown_frame() + "\n", grace);
      proc_->close_stdin();
      auto status = killed_ ? killed_ : proc_->wait_until(grace);
      r.forced_kill = killed_.has_value();
      if (!status) {
        status = proc_->kill_and_wait();
        r.forced_kill = true;
      }
      r.exit_code = status->code;
      r.term_signal = status->signal;
      r.stderr_text = proc_->stderr_text();
    }
    return r;
  }

 private:
  static Clock::duration to_duration(double seconds) {
    return std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(seconds));
  }

  Clock::time_point step_deadline() const {
    const auto now = Clock::now();
    const auto step = now + to_duration(handle_.per_step_timeout);
    const auto total = started_ + to_duration(handle_.total_timeout);
    return std::min(step, total);
  }

  std::string timeout_text(const std::string& step_name) const {
    const bool total_hit = Clock::now() >= started_ + to_duration(handle_.total_timeout);
    if (total_hit) return "episode exceeded the total timeout of " + fmt_seconds(handle_.total_timeout) + " at " + step_name;
    return "policy did not answer within " + fmt_seconds(handle_.per_step_timeout) + " at " + step_name;
  }

  static std::string error_text(const protocol::Reply& reply) {
    std::string text = reply.message.empty() ? "policy reported an error" : reply.message;
    if (!reply.traceback.empty()) text += "\n" + reply.traceback;
    return text;
  }

  std::string exit_suffix() {
    auto status = proc_->wait_until(Clock::now() + std::chrono::milliseconds(200));
    if (!status) return "";
    if (status->code) return " (exit code " + std::to_string(*status->code) + ")";
    if (status->signal) return " (signal " + std::to_string(*status->signal) + ")";
    return "";
  }

  [[noreturn]] void fail_launch(const std::string& msg) {
    PolicyFailure f(FailureKind::LaunchFailure, msg);
    SessionReport r;
    r.failure_reason = msg;
    f.attach_report(r);
    throw f;
  }

  [[noreturn]] void fail_handshake(FailureKind kind, const std::string& msg) {
    failed_ = true;
    failure_reason_ = msg;
    SessionReport r = shutdown();
    PolicyFailure f(kind, msg, -1, r.stderr_text);
    f.attach_report(std::move(r));
    throw f;
  }

  [[noreturn]] void fail_step(FailureKind kind, const std::string& msg, int step) {
    failed_ = true;
    failure_reason_ = msg;
    // Stop a hung or misbehaving child now so no later frame is read out of order.
    if (kind == FailureKind::StepTimeout || kind == FailureKind::MalformedFrame) {
      killed_ = proc_->kill_and_wait();
    } else proc_->wait_until(Clock::now() + std::chrono::milliseconds(200));
    throw PolicyFailure(kind, msg, step, proc_->stderr_text());
  }

  PolicyHandle handle_;
  double capacity_;
  std::optional<Subprocess> proc_;
  Clock::time_point started_{};
  bool failed_ = false;
  std::optional<Subprocess::ExitStatus> killed_;
  bool shut_down_ = false;
  std::string failure_reason_;
  double decision_seconds_ = 0.0;
  double peak_ = 0.0;
  int steps_ = 0;
};

}  // namespace

std::unique_ptr<PolicySession> init_policy(const PolicyHandle& handle, const SystemParams& params) {
  if (handle.per_step_timeout <= 0.0 || handle.total_timeout <= 0.0) {
    throw ConfigError("timeouts", "must be > 0");
  }
  if (const auto* native = std::get_if<NativeSpec>(&handle.descriptor)) return make_native(*native, params);
  return std::make_unique<ExternalSession>(handle, std::get<ExternalSpec>(handle.descriptor), params);
}

EpisodeResult evaluate_policy(const PolicyHandle& handle, const Scenario& scenario, const SystemParams& params) {
  auto session = init_policy(handle, params);
  EpisodeResult result;
  try {
    result.trajectory = run_episode(*session, scenario, params);
  } catch (PolicyFailure& failure) {
    failure.attach_report(session->shutdown());
    throw;
  }
  result.report = session->shutdown();
  return result;
}

}  // namespace aps
