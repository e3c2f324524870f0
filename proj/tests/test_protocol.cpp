#include <doctest.h>

#include <set>
#include <sstream>

#include "distmt/dp_oracle.hpp"
#include "distmt/protocol.hpp"
#include "support.hpp"

using namespace distmt;
using namespace distmt::testing;

// Agent code only ever holds an Environment: it can sample, nothing more.
template <typename E>
concept ExposesTask = requires(const E& e) { e.label(); } || requires(const E& e) { e.task(); } ||
                      requires(const E& e) { e.mu(0); } || requires(const E& e) { e.eta(0); } ||
                      requires(const E& e) { e.transition_table(0); };
static_assert(!ExposesTask<Environmentd>);
static_assert(ExposesTask<LinearTaskd>);
static_assert(EpisodicEnvironment<Environmentd>);

namespace {

const ProtocolParams kSmall{.beta1 = 0.3, .beta2 = 0.3, .k1 = 256, .k2 = 32};

TaskPool single_task_pool() {
  Rng rng(2);
  return generate_task_pool({.num_tasks = 1, .c_sep = 0.5}, rng);
}

TaskPool standard_pool() {
  Rng rng(11);
  return generate_task_pool({.dim = 3, .horizon = 4, .num_tasks = 6, .num_states = 5, .num_actions = 3, .c_sep = 0.5},
                            rng);
}

std::string run_csv(const SimulationReport& report) {
  std::ostringstream out;
  write_run_csv(out, report, json{{"note", "test"}});
  return out.str();
}

}  // namespace

TEST_CASE("default round count") {
  CHECK(default_rounds(1, 1, 0.05) == 18);  // 6 ln 20 = 17.97
  CHECK(default_rounds(10, 4, 0.1) == 70);  // 15 ln 100 = 69.08
  CHECK(default_rounds(6, 3, 0.05) == static_cast<int>(std::ceil(12 * std::log(120.0))));
}

TEST_CASE("task assignment is a pure, roughly uniform function of its key") {
  CHECK(assign_task(5, 2, 3, 6) == assign_task(5, 2, 3, 6));
  std::vector<int> counts(6, 0);
  for (int agent = 1; agent <= 60; ++agent)
    for (int round = 1; round <= 100; ++round) {
      const int m = assign_task(1, agent, round, 6);
      REQUIRE(m >= 1);
      REQUIRE(m <= 6);
      counts[m - 1]++;
    }
  for (int c : counts) CHECK(std::abs(c - 1000) < 5 * std::sqrt(1000.0));
}

TEST_CASE("one agent, one task: learn once, then identify") {
  const TaskPool pool = single_task_pool();
  std::vector<AgentState> agents(1);
  agents[0].agent_id = 1;
  ServerTables server(pool.c_sep, 1);
  RoundContext ctx{&pool, kSmall, 9, 1, false};

  const RoundResult first = run_round(agents, server, ctx);
  REQUIRE(first.outcomes.size() == 1);
  CHECK(first.outcomes[0].path == Path::learned);
  CHECK(first.outcomes[0].episodes_used == kSmall.k1 + kSmall.k2);
  CHECK(first.outcomes[0].resolved_label == 1);
  CHECK(server.ell == 1);
  CHECK(agents[0].ell_local == 1);

  ctx.round = 2;
  const RoundResult second = run_round(agents, server, ctx);
  CHECK(second.outcomes[0].path == Path::identified);
  CHECK(second.outcomes[0].episodes_used == kSmall.k1);
  CHECK(server.ell == 1);
  CHECK(agents[0].episodes() == 2 * kSmall.k1 + kSmall.k2);
  CHECK(agents[0].messages_sent == 3);
  CHECK(agents[0].messages_received == 2);
}

TEST_CASE("identifying a label the agent never received is a protocol error") {
  const TaskPool pool = single_task_pool();
  std::vector<AgentState> agents(1);
  agents[0].agent_id = 1;
  ServerTables server(pool.c_sep, 1);
  run_round(agents, server, {&pool, kSmall, 9, 1, false});
  agents[0].known_f.clear();
  agents[0].ell_local = 0;
  CHECK_THROWS_AS(run_round(agents, server, {&pool, kSmall, 9, 2, false}), ProtocolError);
}

TEST_CASE("single-task simulation") {
  const TaskPool pool = single_task_pool();
  const SimulationConfig config{.num_agents = 1, .delta = 0.05, .params = kSmall};
  const SimulationReport report = run_simulation(pool, config, 4);
  CHECK(report.rounds == 18);
  CHECK(report.outcomes.size() == 18);
  CHECK(std::count_if(report.outcomes.begin(), report.outcomes.end(),
                      [](const RoundOutcome& o) { return o.path == Path::learned; }) == 1);
  CHECK(report.agents[0].episodes == 18L * kSmall.k1 + kSmall.k2);
  CHECK(report.bound_violations() == 0);
}

TEST_CASE("three agents, two tasks, first round") {
  Rng rng(3);
  const TaskPool pool = generate_task_pool({.num_tasks = 2, .c_sep = 0.8}, rng);
  const ProtocolParams params;
  std::vector<AgentState> agents(3);
  for (int i = 0; i < 3; ++i) agents[i].agent_id = i + 1;
  ServerTables server(pool.c_sep, pool.size());
  const RoundResult result = run_round(agents, server, {&pool, params, 21, 1, false});
  CHECK(server.ell <= 3);
  std::set<int> drawn;
  bool probes_tight = true;
  for (const auto& o : result.outcomes) {
    drawn.insert(o.hidden_label);
    probes_tight = probes_tight && std::abs(o.v1_probe - pool.optimal_values[o.hidden_label - 1]) < pool.c_sep / 8;
    CHECK(o.path == Path::learned);
    CHECK(is_eps_optimal(pool.task(o.hidden_label), o.policy, 0.5));
  }
  REQUIRE(probes_tight);
  CHECK(server.ell == static_cast<int>(drawn.size()));
}

TEST_CASE("simulation accounting and completeness") {
  const TaskPool pool = standard_pool();
  const SimulationConfig config{.num_agents = 3, .delta = 0.05, .epsilon = 0.5};
  const SimulationReport report = run_simulation(pool, config, 1);
  const long k1 = config.params.k1, k2 = config.params.k2;
  CHECK(report.rounds == default_rounds(6, 3, 0.05));
  CHECK(report.episode_bound() == report.rounds * (k1 + k2));
  CHECK(report.bound_violations() == 0);
  for (const auto& a : report.agents) {
    CHECK(a.episodes == k1 * report.rounds + k2 * a.learned_rounds);
    CHECK(a.episodes <= report.episode_bound());
    CHECK(a.messages_received == report.rounds);
    CHECK(a.messages_sent == report.rounds + a.learned_rounds);
  }
  for (const auto& o : report.outcomes) {
    CHECK(o.episodes_used == (o.path == Path::learned ? k1 + k2 : k1));
    CHECK(o.policy_gap == doctest::Approx(optimality_gap(pool.task(o.hidden_label), o.policy)).epsilon(1e-15));
    CHECK(o.policy_gap >= -1e-12);
  }
  REQUIRE(report.all_tasks_discovered());
  REQUIRE(report.anomalies.total() == 0);
  CHECK(report.misgroupings() == 0);
  CHECK(report.every_agent_knows_all());
  CHECK(report.eps_failures(false) == 0);
}

TEST_CASE("agents hold a prefix of the server's policy table, and stored policies are eps-optimal") {
  const TaskPool pool = standard_pool();
  std::vector<AgentState> agents(4);
  for (int i = 0; i < 4; ++i) agents[i].agent_id = i + 1;
  ServerTables server(pool.c_sep, pool.size());
  std::map<int, int> label_to_task;
  const ProtocolParams params;
  for (int round = 1; round <= 20; ++round) {
    const RoundResult r = run_round(agents, server, {&pool, params, 77, round, false});
    for (const auto& o : r.outcomes) label_to_task.emplace(o.resolved_label, o.hidden_label);
    for (const auto& a : agents) {
      REQUIRE(a.ell_local == server.ell);
      for (int m = 0; m < a.ell_local; ++m) {
        CHECK(a.known_f[m].label == server.f[m].label);
        CHECK(a.known_f[m].stats.theta == server.f[m].stats.theta);
      }
    }
  }
  REQUIRE(server.ell == pool.size());
  for (const auto& entry : server.f) {
    const LinearTaskd& task = pool.task(label_to_task.at(entry.label));
    CHECK(is_eps_optimal(task, greedy_policy(entry.stats, *pool.features), 0.5));
  }
}

TEST_CASE("simulation is deterministic and independent of scheduling") {
  const TaskPool pool = standard_pool();
  SimulationConfig config{.num_agents = 4, .params = kSmall, .rounds = 6};
  const std::string a = run_csv(run_simulation(pool, config, 12));
  const std::string b = run_csv(run_simulation(pool, config, 12));
  config.parallel = true;
  const SimulationReport par = run_simulation(pool, config, 12);
  CHECK(a == b);
  CHECK(run_csv(par) == a);
  CHECK(summary_json(par) == summary_json(run_simulation(pool, SimulationConfig{.num_agents = 4, .params = kSmall, .rounds = 6}, 12)));
  CHECK(run_csv(run_simulation(pool, config, 13)) != a);
}

TEST_CASE("run CSV and summary") {
  const TaskPool pool = standard_pool();
  const SimulationReport report = run_simulation(pool, SimulationConfig{.num_agents = 2, .params = kSmall, .rounds = 3}, 5);
  std::ostringstream out;
  write_run_csv(out, report, json{{"num_agents", 2}});
  const std::string text = out.str();
  CHECK(text.rfind("# distmt run\n# config: {\"num_agents\":2}\n# seed: 5\n", 0) == 0);
  CHECK(text.find(std::string(kRunCsvColumns) + "\n") != std::string::npos);

  std::istringstream in(text);
  const auto rows = read_run_csv(in);
  REQUIRE(rows.size() == report.outcomes.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& o = report.outcomes[i];
    CHECK(rows[i] == RunCsvRow{o.agent_id, o.round, o.hidden_label, o.resolved_label, to_string(o.path),
                               o.episodes_used, o.v1_probe, o.policy_gap});
  }

  const json s = summary_json(report);
  for (const char* key : {"confusion", "anomalies", "agents", "duplicate_solves", "rounds"}) CHECK(s.contains(key));
  CHECK(s.at("confusion").size() == 6);
  CHECK(format_real(0.1) == "0.10000000000000001");
  CHECK(std::strtod(format_real(2.0 / 3.0).c_str(), nullptr) == 2.0 / 3.0);
}

TEST_CASE("misgroupings count off-diagonal mass") {
  SimulationReport r;
  r.num_groups = 2;
  r.confusion = {{3, 0}, {0, 2}};
  CHECK(r.misgroupings() == 0);
  r.confusion = {{0, 3}, {2, 0}};
  CHECK(r.misgroupings() == 0);  // relabelling is fine
  r.confusion = {{3, 1}, {0, 2}};
  CHECK(r.misgroupings() == 2);
}
