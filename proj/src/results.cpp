#include "aps/results.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <regex>

#include <json.hpp>

#include "aps/util.hpp"

namespace aps {

using json = nlohmann::json;

const char* to_string(FailureCategory c) {
  switch (c) {
    case FailureCategory::Extraction: return "extraction";
    case FailureCategory::Launch: return "launch";
    case FailureCategory::Protocol: return "protocol";
    case FailureCategory::Exception: return "exception";
    case FailureCategory::Timeout: return "timeout";
    case FailureCategory::NonfiniteAction: return "nonfinite-action";
  }
  return "exception";
}

FailureCategory failure_category_from_string(std::string_view s) {
  for (auto c : {FailureCategory::Extraction, FailureCategory::Launch, FailureCategory::Protocol,
                 FailureCategory::Exception, FailureCategory::Timeout, FailureCategory::NonfiniteAction}) {
    if (s == to_string(c)) return c;
  }
  throw SchemaVersionError("unknown failure category '" + std::string(s) + "'");
}

Diagnostic classify_failure(const PolicyFailure& f) {
  Diagnostic d;
  d.step = f.step();
  d.message = f.diagnostic();
  switch (f.kind()) {
    case FailureKind::LaunchFailure: d.category = FailureCategory::Launch; break;
    case FailureKind::HandshakeTimeout:
    case FailureKind::StepTimeout: d.category = FailureCategory::Timeout; break;
    case FailureKind::MalformedAck:
    case FailureKind::MalformedFrame:
    case FailureKind::ProcessExited: d.category = FailureCategory::Protocol; break;
    case FailureKind::PolicyException: d.category = FailureCategory::Exception; break;
  }
  return d;
}

Diagnostic classify_failure(const codegen::ExtractionError& e) {
  return {FailureCategory::Extraction, std::string("could not extract a policy: ") + e.what(), -1};
}

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::Success: return "success";
    case Outcome::Restarted: return "restarted";
    case Outcome::Failed: return "failed";
  }
  return "failed";
}

Outcome outcome_from_string(std::string_view s) {
  if (s == "success") return Outcome::Success;
  if (s == "restarted") return Outcome::Restarted;
  if (s == "failed") return Outcome::Failed;
  throw SchemaVersionError("unknown outcome '" + std::string(s) + "'");
}

double price_volatility(std::span<const double> prices) {
  if (prices.empty()) return 0.0;
  const double n = static_cast<double>(prices.size());
  const double mean = std::accumulate(prices.begin(), prices.end(), 0.0) / n;
  if (mean == 0.0) return 0.0;
  double ss = 0.0;
  for (double p : prices) ss += (p - mean) * (p - mean);
  return std::sqrt(ss / n) / mean;
}

MetaMetrics compute_metrics(const Trajectory& traj, const Scenario& scenario, const SystemParams& params,
                            std::span<const double> prior_costs, int iteration_count) {
  MetaMetrics m;
  m.total_cost = traj.total_cost;
  m.best_cost = traj.total_cost;
  for (double c : prior_costs) m.best_cost = std::min(m.best_cost, c);
  m.iteration_count = iteration_count;

  const std::size_t T = traj.steps.size();
  if (T > 0) {
    std::size_t active = 0;
    for (const auto& s : traj.steps) active += std::abs(s.applied_action) > kActiveThresholdKw;
    m.utilization = 100.0 * static_cast<double>(active) / static_cast<double>(T);
    double soc = 0.0;
    for (const auto& st : traj.states) soc += st.soc;
    m.avg_soc = traj.states.empty() ? 0.0 : soc / static_cast<double>(traj.states.size());
  }
  m.avg_soc_fraction = params.battery_capacity > 0.0 ? m.avg_soc / params.battery_capacity : 0.0;
  m.price_volatility = price_volatility(scenario.buy_price);

  std::vector<double> all(prior_costs.begin(), prior_costs.end());
  all.push_back(traj.total_cost);
  const std::size_t keep = std::min(all.size(), kCostHistoryLength);
  m.cost_history.assign(all.end() - static_cast<std::ptrdiff_t>(keep), all.end());
  m.policy_runtime_seconds = traj.wallclock_seconds;
  if (traj.nonfinite_actions > 0) {
    m.failure = Diagnostic{FailureCategory::NonfiniteAction,
                           std::to_string(traj.nonfinite_actions) + " non-finite action(s) replaced by 0", -1};
  }
  return m;
}

MetaMetrics compute_metrics(const Trajectory& traj, const Scenario& scenario, const SystemParams& params,
                            std::span<const IterationRecord> history) {
  std::vector<double> prior;
  for (const auto& r : history) {
    if (r.outcome == Outcome::Success && r.metrics) prior.push_back(r.metrics->total_cost);
  }
  return compute_metrics(traj, scenario, params, prior, static_cast<int>(history.size()) + 1);
}

// ---- serialization ----------------------------------------------------------

namespace {

json diag_json(const Diagnostic& d) {
  return {{"category", to_string(d.category)}, {"message", d.message}, {"step", d.step}};
}

Diagnostic diag_from(const json& j) {
  return {failure_category_from_string(j.at("category").get<std::string>()), j.at("message").get<std::string>(),
          j.at("step").get<int>()};
}

json metrics_json(const MetaMetrics& m) {
  json j = {{"total_cost", m.total_cost},
            {"best_cost", m.best_cost},
            {"iteration_count", m.iteration_count},
            {"utilization", m.utilization},
            {"avg_soc", m.avg_soc},
            {"avg_soc_fraction", m.avg_soc_fraction},
            {"price_volatility", m.price_volatility},
            {"cost_history", m.cost_history}};
  j["failure"] = m.failure ? diag_json(*m.failure) : json(nullptr);
  return j;
}

MetaMetrics metrics_from(const json& j) {
  MetaMetrics m;
  m.total_cost = j.at("total_cost").get<double>();
  m.best_cost = j.at("best_cost").get<double>();
  m.iteration_count = j.at("iteration_count").get<int>();
  m.utilization = j.at("utilization").get<double>();
  m.avg_soc = j.at("avg_soc").get<double>();
  m.avg_soc_fraction = j.at("avg_soc_fraction").get<double>();
  m.price_volatility = j.at("price_volatility").get<double>();
  m.cost_history = j.at("cost_history").get<std::vector<double>>();
  if (!j.at("failure").is_null()) m.failure = diag_from(j.at("failure"));
  return m;
}

void append_durable(const std::filesystem::path& path, const std::string& text) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw IoError("cannot open " + path.string() + ": " + std::strerror(errno));
  std::size_t done = 0;
  while (done < text.size()) {
    const auto n = ::write(fd, text.data() + done, text.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string err = std::strerror(errno);
      ::close(fd);
      throw IoError("cannot write " + path.string() + ": " + err);
    }
    done += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
}

}  // namespace

std::string to_json_line(const IterationRecord& r) {
  json j = {{"schema_version", kSchemaVersion},
            {"episode_id", r.episode_id},
            {"iteration", r.iteration},
            {"mode", codegen::to_string(r.mode)},
            {"task_description", r.task_description},
            {"candidate_hash", r.candidate_hash},
            {"policy_class", to_string(r.policy_class)},
            {"repair_attempts", r.repair_attempts},
            {"outcome", to_string(r.outcome)}};
  j["metrics"] = r.metrics ? metrics_json(*r.metrics) : json(nullptr);
  json diags = json::array();
  for (const auto& d : r.diagnostics) diags.push_back(diag_json(d));
  j["diagnostics"] = diags;
  return j.dump();
}

IterationRecord from_json_line(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw IoError(std::string("malformed record: ") + e.what());
  }
  const auto version = j.value("schema_version", std::string());
  const auto dot = version.find('.');
  int major = -1;
  try {
    major = std::stoi(version.substr(0, dot));
  } catch (...) {
  }
  if (major != kSchemaMajor) throw SchemaVersionError("unsupported record schema version '" + version + "'");
  try {
    IterationRecord r;
    r.episode_id = j.at("episode_id").get<int>();
    r.iteration = j.at("iteration").get<int>();
    const auto mode = j.at("mode").get<std::string>();
    if (mode != "explore" && mode != "refine") throw SchemaVersionError("unknown mode '" + mode + "'");
    r.mode = mode == "explore" ? codegen::Mode::Explore : codegen::Mode::Refine;
    r.task_description = j.at("task_description").get<std::string>();
    r.candidate_hash = j.at("candidate_hash").get<std::string>();
    r.policy_class = policy_class_from_string(j.at("policy_class").get<std::string>());
    r.repair_attempts = j.at("repair_attempts").get<int>();
    r.outcome = outcome_from_string(j.at("outcome").get<std::string>());
    if (!j.at("metrics").is_null()) r.metrics = metrics_from(j.at("metrics"));
    for (const auto& d : j.at("diagnostics")) r.diagnostics.push_back(diag_from(d));
    return r;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed record: ") + e.what());
  }
}

std::filesystem::path write_candidate(const std::filesystem::path& run_dir, const std::string& hash,
                                      const std::string& source) {
  const auto dir = run_dir / "candidates";
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const auto path = dir / (hash + ".txt");
  // O_EXCL makes the first writer win when episodes run concurrently.
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0644);
  if (fd < 0) {
    if (errno == EEXIST) return path;
    throw IoError("cannot create " + path.string() + ": " + std::strerror(errno));
  }
  ::close(fd);
  const auto tmp = dir / (hash + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << source;
    if (!out) throw IoError("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot write " + path.string() + ": " + ec.message());
  return path;
}

void persist(const IterationRecord& r, const std::filesystem::path& run_dir) {
  std::error_code ec;
  std::filesystem::create_directories(run_dir, ec);
  if (ec) throw IoError("cannot create " + run_dir.string() + ": " + ec.message());
  append_durable(run_dir / "iterations.jsonl", to_json_line(r) + "\n");

  const auto csv = run_dir / "summary.csv";
  std::string row;
  if (!std::filesystem::exists(csv)) {
    row = "episode,iteration,mode,total_cost,best_cost,utilization,avg_soc,runtime_s,outcome\n";
  }
  auto num = [&](auto getter) { return r.metrics ? util::format_double(getter(*r.metrics)) : std::string(); };
  row += std::to_string(r.episode_id) + "," + std::to_string(r.iteration) + "," + codegen::to_string(r.mode) + "," +
         num([](const MetaMetrics& m) { return m.total_cost; }) + "," +
         num([](const MetaMetrics& m) { return m.best_cost; }) + "," +
         num([](const MetaMetrics& m) { return m.utilization; }) + "," +
         num([](const MetaMetrics& m) { return m.avg_soc; }) + "," +
         num([](const MetaMetrics& m) { return m.policy_runtime_seconds; }) + "," + to_string(r.outcome) + "\n";
  append_durable(csv, row);
}

std::vector<IterationRecord> read_records(const std::filesystem::path& run_dir) {
  std::ifstream in(run_dir / "iterations.jsonl");
  if (!in) throw IoError("cannot read " + (run_dir / "iterations.jsonl").string());
  std::vector<IterationRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!util::trim(line).empty()) out.push_back(from_json_line(line));
  }
  return out;
}

PolicyClass policy_class_annotation(std::string_view source) {
  static const std::regex re(R"(#\s*policy-class:\s*([A-Za-z]+))");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(source.begin(), source.end(), m, re)) return PolicyClass::Unknown;
  return policy_class_from_string(m[1].str());
}

}  // namespace aps
