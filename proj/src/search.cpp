#include "aps/search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "aps/util.hpp"

namespace aps::search {

using json = nlohmann::json;

Mode decide_mode(std::span<const double> costs, int window, double epsilon) {
  if (costs.empty()) return Mode::Explore;
  double best = std::numeric_limits<double>::infinity();
  int streak = 0;
  bool improved = false;
  for (double c : costs) {
    improved = std::isinf(best) || c < best - epsilon;
    streak = improved ? 0 : streak + 1;
    best = std::min(best, c);
  }
  if (improved) return Mode::Refine;
  return streak >= window ? Mode::Explore : Mode::Refine;
}

Mode decide_mode(const MetaState& state, const SearchConfig& config) {
  return decide_mode(state.completed_costs, config.stagnation_window, config.improvement_epsilon);
}

std::string format_cost(double value) { return util::format_fixed(value, 2); }

std::string format_cost_history(std::span<const double> costs) {
  std::string s = "[";
  for (std::size_t i = 0; i < costs.size(); ++i) {
    if (i) s += ", ";
    s += format_cost(costs[i]);
  }
  return s + "]";
}

std::string build_meta_prompt(const MetaState& state, const std::string& incumbent_source, Mode mode) {
  const std::string na = "N/A";
  const auto& m = state.latest;
  const std::string& code = incumbent_source.empty() ? codegen::policy_signature() : incumbent_source;
  return codegen::render(
      codegen::template_text(codegen::TemplateKind::Meta),
      {{"total_cost", m ? format_cost(m->total_cost) : na},
       {"best_cost", state.best_cost ? format_cost(*state.best_cost) : na},
       {"iteration_count", m ? std::to_string(m->iteration_count) : na},
       {"utilization", m ? util::format_fixed(m->utilization, 1) : na},
       {"avg_soc", m ? util::format_fixed(m->avg_soc, 2) + " kWh" : na},
       {"price_volatility", m ? util::format_fixed(m->price_volatility, 3) : na},
       {"cost_history", m ? format_cost_history(m->cost_history) : na},
       {"policy_code", code},
       {"fence", codegen::fence_for(code)},
       {"explore_or_refine_instruction", codegen::explore_or_refine_instruction(mode)},
       {"task_mode", codegen::task_mode_text(mode)}});
}

ClientFactory default_client_factory(const RunConfig& config) {
  return [config](Role role, int) -> std::unique_ptr<llm::LlmClient> {
    const auto kind = role == Role::Generation ? config.search.generator : config.search.meta_generator;
    std::shared_ptr<llm::Transport> transport;
    if (kind == GeneratorKind::Scripted) {
      const auto sub = config.search.scripted_dir / (role == Role::Generation ? "generation" : "meta");
      transport = llm::MockTransport::directory(sub);
    } else {
      transport = std::make_shared<llm::HttpTransport>();
    }
    return std::make_unique<llm::LlmClient>(config.endpoint, std::move(transport));
  };
}

namespace {

Diagnostic generator_failure(const llm::LlmError& e) {
  return {FailureCategory::Exception, std::string("generator failure: ") + e.what(), -1};
}

}  // namespace

IterationRecord run_iteration(int iteration, EpisodeContext& ctx) {
  const auto& cfg = *ctx.search;
  IterationRecord rec;
  rec.episode_id = ctx.episode_id;
  rec.iteration = iteration;
  rec.mode = decide_mode(ctx.state, cfg);
  ++ctx.state.iterations_done;

  const std::string& signature = codegen::policy_signature();
  std::string raw;
  try {
    const auto meta_prompt = build_meta_prompt(ctx.state, ctx.state.incumbent_source, rec.mode);
    std::string task(util::trim(ctx.meta->complete(meta_prompt).text));
    if (task.empty()) task = codegen::explore_or_refine_instruction(rec.mode);
    rec.task_description = task;
    raw = ctx.generator->complete(codegen::build_generation_prompt(task, signature, ctx.params)).text;
  } catch (const llm::LlmError& e) {
    rec.outcome = Outcome::Failed;
    rec.diagnostics.push_back(generator_failure(e));
    return rec;
  }

  for (int attempt = 0;; ++attempt) {
    std::string failed_code = raw;
    Diagnostic diag;
    try {
      const auto art = codegen::extract_policy(raw);
      failed_code = art.extracted_source;
      rec.candidate_hash = art.hash_hex();
      rec.policy_class = policy_class_annotation(art.extracted_source);
      const auto path = write_candidate(ctx.run_dir, rec.candidate_hash, art.extracted_source);

      auto handle = PolicyHandle::external(cfg.runner, path);
      handle.per_step_timeout = cfg.per_step_timeout;
      handle.total_timeout = cfg.total_timeout;
      handle.policy_class = rec.policy_class;
      const auto result = evaluate_policy(handle, ctx.scenario, ctx.params);

      auto metrics = compute_metrics(result.trajectory, ctx.scenario, ctx.params, ctx.state.completed_costs,
                                     ctx.state.iterations_done);
      rec.metrics = metrics;
      rec.outcome = Outcome::Success;
      rec.repair_attempts = attempt;

      auto& st = ctx.state;
      st.completed_costs.push_back(metrics.total_cost);
      if (!st.best_cost || metrics.total_cost < *st.best_cost) {
        st.best_cost = metrics.total_cost;
        st.incumbent_source = art.extracted_source;
      }
      st.latest = std::move(metrics);
      return rec;
    } catch (const codegen::ExtractionError& e) {
      diag = classify_failure(e);
    } catch (const PolicyFailure& f) {
      diag = classify_failure(f);
    }
    rec.diagnostics.push_back(diag);
    if (attempt >= cfg.max_repair_attempts) {
      rec.outcome = Outcome::Restarted;
      rec.repair_attempts = attempt;
      return rec;
    }
    try {
      if (util::trim(failed_code).empty()) failed_code = "# (empty response)";
      raw = ctx.generator->complete(codegen::build_repair_prompt(diag.message, failed_code, signature)).text;
    } catch (const llm::LlmError& e) {
      rec.outcome = Outcome::Failed;
      rec.repair_attempts = attempt + 1;
      rec.diagnostics.push_back(generator_failure(e));
      return rec;
    }
  }
}

std::vector<AggregateRow> aggregate(std::span<const IterationRecord> records, int iterations) {
  std::vector<std::vector<double>> by_iter(static_cast<std::size_t>(std::max(iterations, 0)));
  for (const auto& r : records) {
    if (r.outcome != Outcome::Success || !r.metrics) continue;
    if (r.iteration < 0 || r.iteration >= iterations) continue;
    by_iter[static_cast<std::size_t>(r.iteration)].push_back(r.metrics->total_cost);
  }
  std::vector<AggregateRow> rows;
  for (int i = 0; i < iterations; ++i) {
    const auto& v = by_iter[static_cast<std::size_t>(i)];
    AggregateRow row;
    row.iteration = i;
    row.n = v.size();
    if (!v.empty()) {
      row.median = util::quantile(v, 0.5);
      row.q1 = util::quantile(v, 0.25);
      row.q3 = util::quantile(v, 0.75);
      row.min = *std::min_element(v.begin(), v.end());
      row.max = *std::max_element(v.begin(), v.end());
    }
    rows.push_back(row);
  }
  return rows;
}

std::string aggregates_csv(std::span<const AggregateRow> rows) {
  std::string s = "iteration,n,median,q1,q3,min,max\n";
  for (const auto& r : rows) {
    s += std::to_string(r.iteration) + "," + std::to_string(r.n);
    for (double v : {r.median, r.q1, r.q3, r.min, r.max}) s += "," + (r.n ? util::format_double(v) : std::string());
    s += "\n";
  }
  return s;
}

json benchmarks_json(std::span<const BenchmarkEntry> entries) {
  json arr = json::array();
  for (const auto& e : entries) {
    arr.push_back({{"seed", e.seed},
                   {"steps", e.steps},
                   {"no_battery", e.no_battery},
                   {"finite_horizon", e.finite_horizon},
                   {"steady_state", e.steady_state}});
  }
  return {{"scenarios", arr}};
}

Scenario episode_scenario(const RunConfig& config, int episode, SystemParams& params) {
  params = config.system;
  if (!config.search.scenario_file.empty()) {
    auto sc = read_scenario_csv(config.search.scenario_file);
    params.horizon_steps = static_cast<int>(sc.size());
    return sc;
  }
  if (config.search.seed_policy == SeedPolicy::PerEpisodeOffset) params.seed += static_cast<std::uint64_t>(episode);
  return generate_scenario(params);
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

// Writes records in episode order whatever order the episodes finish in.
class Sequencer {
 public:
  Sequencer(std::filesystem::path dir, int episodes)
      : dir_(std::move(dir)), pending_(static_cast<std::size_t>(episodes)), done_(static_cast<std::size_t>(episodes)) {}

  void submit(int episode, IterationRecord rec) {
    std::lock_guard lock(mu_);
    if (episode == next_) {
      write(rec);
    } else {
      pending_[static_cast<std::size_t>(episode)].push_back(std::move(rec));
    }
  }

  void finish(int episode) {
    std::lock_guard lock(mu_);
    done_[static_cast<std::size_t>(episode)] = true;
    while (next_ < static_cast<int>(done_.size()) && done_[static_cast<std::size_t>(next_)]) {
      ++next_;
      if (next_ < static_cast<int>(done_.size())) {
        for (auto& r : pending_[static_cast<std::size_t>(next_)]) write(r);
        pending_[static_cast<std::size_t>(next_)].clear();
      }
    }
  }

  std::vector<IterationRecord> written() const {
    std::lock_guard lock(mu_);
    return written_;
  }

 private:
  void write(const IterationRecord& r) {
    persist(r, dir_);
    written_.push_back(r);
  }

  std::filesystem::path dir_;
  std::vector<std::vector<IterationRecord>> pending_;
  std::vector<bool> done_;
  std::vector<IterationRecord> written_;
  int next_ = 0;
  mutable std::mutex mu_;
};

}  // namespace

RunSummary run_search(const RunConfig& config, const std::filesystem::path& run_dir, const ClientFactory& factory_in,
                      const std::string& command) {
  config.system.validate();
  config.search.validate();
  config.endpoint.validate();

  std::error_code ec;
  if (std::filesystem::exists(run_dir) && !std::filesystem::is_empty(run_dir, ec)) {
    throw IoError("run directory " + run_dir.string() + " is not empty");
  }
  std::filesystem::create_directories(run_dir, ec);
  if (ec) throw IoError("cannot create " + run_dir.string() + ": " + ec.message());
  write_text(run_dir / "config.json", make_manifest(config, command).dump(2) + "\n");

  const ClientFactory factory = factory_in ? factory_in : default_client_factory(config);
  const auto& sc = config.search;

  // Scenarios up front, so invalid input fails before any generator call.
  std::vector<Scenario> scenarios;
  std::vector<SystemParams> params(static_cast<std::size_t>(sc.episodes));
  for (int e = 0; e < sc.episodes; ++e) {
    scenarios.push_back(episode_scenario(config, e, params[static_cast<std::size_t>(e)]));
    scenarios.back().validate();
  }

  RunSummary summary;
  Sequencer seq(run_dir, sc.episodes);
  std::mutex mu;
  std::atomic<int> next_episode{0};
  std::exception_ptr error;

  auto worker = [&] {
    for (;;) {
      const int e = next_episode.fetch_add(1);
      if (e >= sc.episodes) return;
      try {
        auto gen = factory(Role::Generation, e);
        auto meta = factory(Role::Meta, e);
        EpisodeContext ctx;
        ctx.episode_id = e;
        ctx.scenario = scenarios[static_cast<std::size_t>(e)];
        ctx.params = params[static_cast<std::size_t>(e)];
        ctx.search = &sc;
        ctx.run_dir = run_dir;
        ctx.generator = gen.get();
        ctx.meta = meta.get();
        bool aborted = false;
        std::optional<double> previous_best;
        for (int i = 0; i < sc.iterations && !aborted; ++i) {
          auto rec = run_iteration(i, ctx);
          if (ctx.state.best_cost && previous_best && *ctx.state.best_cost > *previous_best) {
            throw std::logic_error("incumbent cost increased");
          }
          previous_best = ctx.state.best_cost;
          aborted = rec.outcome == Outcome::Failed;
          seq.submit(e, std::move(rec));
        }
        std::lock_guard lock(mu);
        summary.generation_ledger.merge(gen->ledger());
        summary.meta_ledger.merge(meta->ledger());
        summary.generation_ledger.input_price_per_m = gen->ledger().input_price_per_m;
        summary.generation_ledger.output_price_per_m = gen->ledger().output_price_per_m;
        summary.meta_ledger.input_price_per_m = meta->ledger().input_price_per_m;
        summary.meta_ledger.output_price_per_m = meta->ledger().output_price_per_m;
        if (aborted) summary.complete = false;
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
        summary.complete = false;
      }
      seq.finish(e);
    }
  };

  const int threads = std::min(sc.parallel_episodes, sc.episodes);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  summary.records = seq.written();
  summary.aggregates = aggregate(summary.records, sc.iterations);
  write_text(run_dir / "aggregates.csv", aggregates_csv(summary.aggregates));

  // Benchmarks once per distinct scenario.
  std::map<std::uint64_t, bool> seen;
  for (int e = 0; e < sc.episodes; ++e) {
    const auto& p = params[static_cast<std::size_t>(e)];
    if (seen[p.seed]) continue;
    seen[p.seed] = true;
    const auto& s = scenarios[static_cast<std::size_t>(e)];
    BenchmarkEntry b;
    b.seed = p.seed;
    b.steps = static_cast<int>(s.size());
    b.no_battery = no_battery_cost(s, p);
    b.finite_horizon = solve_benchmark(s, p, LpVariant::FiniteHorizon).objective;
    b.steady_state = solve_benchmark(s, p, LpVariant::SteadyState).objective;
    summary.benchmarks.push_back(b);
  }
  write_text(run_dir / "benchmarks.json", benchmarks_json(summary.benchmarks).dump(2) + "\n");

  auto ledger_json = [](const llm::CostLedger& l) {
    return json{{"input_tokens", l.input_tokens}, {"output_tokens", l.output_tokens},
                {"calls", l.calls},               {"retries", l.retries},
                {"wallclock_s", l.wallclock_seconds}, {"cost_usd", llm::estimate_cost(l)}};
  };
  json rs = {{"complete", summary.complete},
             {"records", summary.records.size()},
             {"generation", ledger_json(summary.generation_ledger)},
             {"meta", ledger_json(summary.meta_ledger)}};
  write_text(run_dir / "run_summary.json", rs.dump(2) + "\n");

  if (error) std::rethrow_exception(error);
  return summary;
}

}  // namespace aps::search
