#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "aps/results.hpp"

using namespace aps;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("aps_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(d);
  return d;
}

Trajectory make_traj(std::vector<double> applied, std::vector<double> soc) {
  Trajectory t;
  for (std::size_t i = 0; i < applied.size(); ++i) {
    SystemState s;
    s.t = static_cast<int>(i);
    s.soc = soc[i];
    t.states.push_back(s);
    StepResult r;
    r.applied_action = applied[i];
    r.cost = 1.0;
    t.steps.push_back(r);
    t.total_cost += 1.0;
  }
  return t;
}

Scenario prices(std::vector<double> buy) {
  Scenario sc;
  sc.buy_price = buy;
  sc.sell_price.assign(buy.size(), 0.08);
  sc.load.assign(buy.size(), 1.0);
  sc.pv.assign(buy.size(), 0.0);
  sc.hour_of_day.assign(buy.size(), 0.0);
  return sc;
}

IterationRecord sample_record(int i) {
  IterationRecord r;
  r.episode_id = 2;
  r.iteration = i;
  r.mode = codegen::Mode::Refine;
  r.task_description = "Charge below 0.30 €/kWh.\nLine two \"quoted\"";
  r.candidate_hash = "00ff00ff00ff00ff";
  r.policy_class = PolicyClass::CFA;
  MetaMetrics m;
  m.total_cost = -1.2345678901234567;
  m.best_cost = -2.5;
  m.iteration_count = i + 1;
  m.utilization = 37.5;
  m.avg_soc = 4.2;
  m.avg_soc_fraction = 0.42;
  m.price_volatility = 0.1428571428571429;
  m.cost_history = {3.0, -2.5, -1.2345678901234567};
  m.failure = Diagnostic{FailureCategory::NonfiniteAction, "1 non-finite action(s) replaced by 0", -1};
  r.metrics = m;
  r.repair_attempts = 2;
  r.diagnostics = {{FailureCategory::Timeout, "policy did not answer within 2 s at step 17", 17},
                   {FailureCategory::Extraction, "could not extract a policy: none", -1}};
  return r;
}

}  // namespace

TEST_CASE("utilization counts applied actions above 0.01 kW") {
  const auto m = compute_metrics(make_traj({0, 2, -1, 0}, {5, 5, 5, 5}), prices({0.3, 0.3, 0.3, 0.3}), SystemParams{}, {}, 1);
  CHECK(m.utilization == 50.0);
  CHECK(m.avg_soc == 5.0);
  CHECK(m.avg_soc_fraction == 0.5);
  CHECK(m.price_volatility == 0.0);
  const auto tiny = compute_metrics(make_traj({0.005, -0.01, 0.0100001, 0}, {1, 1, 1, 1}), prices({1, 1, 1, 1}), SystemParams{}, {}, 1);
  CHECK(tiny.utilization == 25.0);
}

TEST_CASE("price volatility is population std over mean") {
  const std::vector<double> p = {0.3, 0.4};
  CHECK(price_volatility(p) == doctest::Approx(0.1428571428571429).epsilon(1e-12));
}

TEST_CASE("best cost and history window") {
  const std::vector<double> prior = {9, 3, 8, 7, 6, 5};
  const auto m = compute_metrics(make_traj({0, 0}, {0, 0}), prices({0.3, 0.3}), SystemParams{}, prior, 7);
  CHECK(m.total_cost == 2.0);
  CHECK(m.best_cost == 2.0);
  CHECK(m.cost_history == std::vector<double>{8, 7, 6, 5, 2});
  CHECK(m.iteration_count == 7);
  const std::vector<double> better = {1.0};
  CHECK(compute_metrics(make_traj({0, 0}, {0, 0}), prices({0.3, 0.3}), SystemParams{}, better, 2).best_cost == 1.0);
}

TEST_CASE("history overload skips failed iterations") {
  std::vector<IterationRecord> hist(3);
  hist[0].outcome = Outcome::Success;
  hist[0].metrics = MetaMetrics{};
  hist[0].metrics->total_cost = 4.0;
  hist[1].outcome = Outcome::Restarted;
  hist[2].outcome = Outcome::Success;
  hist[2].metrics = MetaMetrics{};
  hist[2].metrics->total_cost = 1.0;
  const auto m = compute_metrics(make_traj({0}, {0}), prices({0.3}), SystemParams{}, hist);
  CHECK(m.cost_history == std::vector<double>{4.0, 1.0, 1.0});
  CHECK(m.iteration_count == 4);
  CHECK(m.best_cost == 1.0);
}

TEST_CASE("classify_failure categories") {
  const PolicyFailure timeout(FailureKind::StepTimeout, "policy did not answer within 2 s at step 17", 17);
  const auto d = classify_failure(timeout);
  CHECK(d.category == FailureCategory::Timeout);
  CHECK(d.message.find("step 17") != std::string::npos);
  CHECK(d.step == 17);
  CHECK(classify_failure(codegen::NoPolicyFound("no class")).category == FailureCategory::Extraction);
  const std::string tb = "Traceback (most recent call last):\n  File \"x.py\", line 1\nZeroDivisionError: division by zero";
  const auto e = classify_failure(PolicyFailure(FailureKind::PolicyException, tb, 3));
  CHECK(e.category == FailureCategory::Exception);
  CHECK(e.message == tb);
  CHECK(classify_failure(PolicyFailure(FailureKind::LaunchFailure, "x")).category == FailureCategory::Launch);
  CHECK(classify_failure(PolicyFailure(FailureKind::MalformedFrame, "x")).category == FailureCategory::Protocol);
  CHECK(classify_failure(PolicyFailure(FailureKind::HandshakeTimeout, "x")).category == FailureCategory::Timeout);
}

TEST_CASE("records round-trip and persist appends lines") {
  const auto dir = fresh_dir("persist");
  const auto a = sample_record(0);
  auto b = sample_record(1);
  b.metrics.reset();
  b.outcome = Outcome::Restarted;
  b.repair_attempts = 5;
  CHECK(from_json_line(to_json_line(a)) == a);
  persist(a, dir);
  persist(b, dir);
  const auto back = read_records(dir);
  REQUIRE(back.size() == 2);
  CHECK(back[0] == a);
  CHECK(back[1] == b);
  std::ifstream csv(dir / "summary.csv");
  std::string line;
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 3);
  std::filesystem::remove_all(dir);
}

TEST_CASE("candidate files are written once per hash") {
  const auto dir = fresh_dir("cand");
  const auto p1 = write_candidate(dir, "abc", "first");
  const auto p2 = write_candidate(dir, "abc", "second");
  CHECK(p1 == p2);
  std::ifstream in(p1);
  std::string s;
  std::getline(in, s);
  CHECK(s == "first");
  std::size_t n = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir / "candidates")) ++n;
  CHECK(n == 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("unknown major schema version is rejected") {
  auto line = to_json_line(sample_record(0));
  const auto pos = line.find("\"1.0\"");
  REQUIRE(pos != std::string::npos);
  line.replace(pos, 5, "\"2.0\"");
  CHECK_THROWS_AS(from_json_line(line), SchemaVersionError);
  auto minor = to_json_line(sample_record(0));
  minor.replace(minor.find("\"1.0\""), 5, "\"1.7\"");
  CHECK_NOTHROW(from_json_line(minor));
}

TEST_CASE("policy class annotation") {
  CHECK(policy_class_annotation("# policy-class: CFA\nclass Policy:") == PolicyClass::CFA);
  CHECK(policy_class_annotation("class Policy:") == PolicyClass::Unknown);
}
