#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <algorithm>
#include <cmath>

#include "aps/rng.hpp"
#include "aps/search.hpp"

using namespace aps;
using namespace aps::search;

namespace {

const std::string kFixtures = APS_FIXTURES_DIR;

std::filesystem::path fresh_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("aps_search_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(d);
  return d;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig scripted(const std::string& dir, int episodes, int iterations) {
  RunConfig c;
  c.search.episodes = episodes;
  c.search.iterations = iterations;
  c.search.generator = GeneratorKind::Scripted;
  c.search.meta_generator = GeneratorKind::Scripted;
  c.search.scripted_dir = kFixtures + "/scripted/" + dir;
  c.search.runner = {"/bin/bash", kFixtures + "/runners/stub_runner.sh"};
  c.search.per_step_timeout = 1.0;
  c.search.total_timeout = 20.0;
  c.system.horizon_steps = 24;
  return c;
}

std::vector<Mode> modes(const std::vector<IterationRecord>& rs) {
  std::vector<Mode> m;
  for (const auto& r : rs) m.push_back(r.mode);
  return m;
}

}  // namespace

TEST_CASE("decide_mode examples") {
  CHECK(decide_mode(std::vector<double>{}, 3, 0.01) == Mode::Explore);
  CHECK(decide_mode(std::vector<double>{5, 3}, 3, 0.01) == Mode::Refine);
  CHECK(decide_mode(std::vector<double>{3, 4, 5, 6}, 3, 0.01) == Mode::Explore);
  CHECK(decide_mode(std::vector<double>{3, 4, 5}, 3, 0.01) == Mode::Refine);
  // an improvement within epsilon does not count
  CHECK(decide_mode(std::vector<double>{3, 2.995, 2.99, 2.985}, 3, 0.01) == Mode::Explore);
  CHECK(decide_mode(std::vector<double>{5}, 3, 0.01) == Mode::Refine);
}

TEST_CASE("property: decide_mode is a pure function of the history") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> costs;
    const int n = 1 + trial % 9;
    for (int i = 0; i < n; ++i) costs.push_back(std::floor(rng.uniform() * 10.0));
    const auto a = decide_mode(costs, 3, 0.01);
    CHECK(decide_mode(costs, 3, 0.01) == a);
    // right after a strict improvement the rule always refines
    std::vector<double> improved = costs;
    improved.push_back(*std::min_element(costs.begin(), costs.end()) - 1.0);
    CHECK(decide_mode(improved, 3, 0.01) == Mode::Refine);
  }
}

TEST_CASE("meta prompt contents") {
  MetaState st;
  const auto first = build_meta_prompt(st, "", Mode::Explore);
  CHECK(first.find("Current Total Cost: N/A") != std::string::npos);
  CHECK(first.find("Propose a novel approach that fundamentally rethinks") != std::string::npos);
  CHECK(first.find(codegen::policy_signature()) != std::string::npos);

  MetaMetrics m;
  m.total_cost = -1.23;
  m.best_cost = -1.23;
  m.iteration_count = 4;
  m.utilization = 62.5;
  m.avg_soc = 4.25;
  m.price_volatility = 0.1428571;
  m.cost_history = {2.0, -1.23};
  st.latest = m;
  st.best_cost = -1.23;
  st.completed_costs = {2.0, -1.23};
  const std::string code = "class Policy:\n    def take_action(self, *a):\n        return 1.0\n";
  const auto p = build_meta_prompt(st, code, Mode::Refine);
  CHECK(p.find("Current Total Cost: -1.23\n") != std::string::npos);
  CHECK(p.find("Iteration: 4\n") != std::string::npos);
  CHECK(p.find("Battery Utilization: 62.5%\n") != std::string::npos);
  CHECK(p.find("Performance History (last 5 costs): [2.00, -1.23]\n") != std::string::npos);
  CHECK(p.find("Suggest ONE specific improvement to the existing approach") != std::string::npos);
  CHECK(p.find("```python\n" + code + "\n```") != std::string::npos);
}

TEST_CASE("scripted NoOp: one iteration costs the no-battery amount") {
  const auto dir = fresh_dir("noop");
  auto cfg = scripted("noop", 1, 1);
  const auto s = run_search(cfg, dir);
  REQUIRE(s.records.size() == 1);
  const auto& r = s.records[0];
  CHECK(r.outcome == Outcome::Success);
  CHECK(r.mode == Mode::Explore);
  CHECK(r.repair_attempts == 0);
  REQUIRE(r.metrics);
  SystemParams p;
  const auto sc = episode_scenario(cfg, 0, p);
  CHECK(r.metrics->total_cost == doctest::Approx(no_battery_cost(sc, p)).epsilon(1e-12));
  REQUIRE(s.benchmarks.size() == 1);
  CHECK(s.benchmarks[0].no_battery == doctest::Approx(r.metrics->total_cost).epsilon(1e-12));
  for (const char* f : {"config.json", "iterations.jsonl", "summary.csv", "aggregates.csv", "benchmarks.json"}) {
    CHECK(std::filesystem::exists(dir / f));
  }
  CHECK(std::filesystem::exists(dir / "candidates" / (r.candidate_hash + ".txt")));
  auto expected = s.records;
  for (auto& rec : expected) rec.metrics->policy_runtime_seconds = 0.0;  // not part of the jsonl record
  CHECK(read_records(dir) == expected);
  std::filesystem::remove_all(dir);
}

TEST_CASE("greedy trace for scripted costs 5, 3, 4, 2") {
  const auto dir = fresh_dir("costs");
  auto cfg = scripted("costs", 1, 4);
  cfg.search.scenario_file = kFixtures + "/scenarios/one_step.csv";
  cfg.system.initial_soc_fraction = 0.0;
  const auto s = run_search(cfg, dir);
  REQUIRE(s.records.size() == 4);
  std::vector<double> costs, best;
  for (const auto& r : s.records) {
    REQUIRE(r.metrics);
    costs.push_back(r.metrics->total_cost);
    best.push_back(r.metrics->best_cost);
  }
  CHECK(costs == std::vector<double>{5, 3, 4, 2});
  CHECK(best == std::vector<double>{5, 3, 3, 2});
  CHECK(modes(s.records) == std::vector<Mode>{Mode::Explore, Mode::Refine, Mode::Refine, Mode::Refine});
  CHECK(s.records[3].metrics->cost_history == std::vector<double>{5, 3, 4, 2});
  std::filesystem::remove_all(dir);
}

TEST_CASE("always-broken candidate: five repairs, then restarted") {
  const auto dir = fresh_dir("broken");
  auto cfg = scripted("broken", 1, 2);
  cfg.system.horizon_steps = 4;
  const auto s = run_search(cfg, dir);
  REQUIRE(s.records.size() == 2);
  for (const auto& r : s.records) {
    CHECK(r.outcome == Outcome::Restarted);
    CHECK(r.repair_attempts == 5);
    CHECK(r.diagnostics.size() == 6);
    CHECK(r.diagnostics[0].category == FailureCategory::Exception);
    CHECK(r.diagnostics[0].message.find("ValueError: boom") != std::string::npos);
    CHECK_FALSE(r.metrics);
  }
  // restarted iterations leave the meta state untouched
  CHECK(s.records[1].mode == Mode::Explore);
  CHECK(s.complete);
  std::filesystem::remove_all(dir);
}

TEST_CASE("identical episodes: zero spread and one aggregate row per iteration") {
  const auto dir = fresh_dir("ident");
  const auto s = run_search(scripted("noop", 3, 2), dir);
  REQUIRE(s.aggregates.size() == 2);
  for (const auto& row : s.aggregates) {
    CHECK(row.n == 3);
    CHECK(row.q3 - row.q1 == 0.0);
    CHECK(row.max - row.min == 0.0);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("determinism: repeated runs give identical files, also with parallel episodes") {
  const auto a = fresh_dir("det_a"), b = fresh_dir("det_b"), c = fresh_dir("det_c");
  auto cfg = scripted("costs", 3, 4);
  cfg.search.seed_policy = SeedPolicy::PerEpisodeOffset;
  run_search(cfg, a);
  run_search(cfg, b);
  cfg.search.parallel_episodes = 3;
  run_search(cfg, c);
  CHECK(slurp(a / "iterations.jsonl") == slurp(b / "iterations.jsonl"));
  CHECK(slurp(a / "aggregates.csv") == slurp(b / "aggregates.csv"));
  CHECK(slurp(a / "iterations.jsonl") == slurp(c / "iterations.jsonl"));
  CHECK(slurp(a / "aggregates.csv") == slurp(c / "aggregates.csv"));
  CHECK_FALSE(slurp(a / "iterations.jsonl").empty());
  for (const auto& d : {a, b, c}) std::filesystem::remove_all(d);
}

TEST_CASE("generator failure aborts the episode and keeps partial results") {
  const auto dir = fresh_dir("genfail");
  auto cfg = scripted("noop", 2, 3);
  cfg.endpoint.backoff_initial = 0.0;
  cfg.endpoint.max_retries = 1;
  ClientFactory factory = [&](Role role, int episode) {
    auto t = llm::MockTransport::directory(cfg.search.scripted_dir /
                                           (role == Role::Generation ? "generation" : "meta"));
    if (episode == 0 && role == Role::Generation) {
      // succeed once, then fail for good
      auto inner = std::make_unique<llm::LlmClient>(cfg.endpoint, t);
      inner->complete("warm-up");
      for (int i = 0; i < 20; ++i) t->queue_status(503);
      return inner;
    }
    return std::make_unique<llm::LlmClient>(cfg.endpoint, t);
  };
  const auto s = run_search(cfg, dir, factory);
  CHECK_FALSE(s.complete);
  REQUIRE(s.records.size() == 1 + 3);
  CHECK(s.records[0].outcome == Outcome::Failed);
  CHECK(s.records[0].diagnostics.back().message.find("generator failure") != std::string::npos);
  CHECK(read_records(dir).size() == 4);
  std::filesystem::remove_all(dir);
}

TEST_CASE("run directory must be empty") {
  const auto dir = fresh_dir("nonempty");
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "keep.txt") << "x";
  CHECK_THROWS_AS(run_search(scripted("noop", 1, 1), dir), IoError);
  std::filesystem::remove_all(dir);
}
