#include "distmt/protocol.hpp"

#include <cmath>
#include <cstdio>
#include <future>
#include <istream>
#include <ostream>
#include <sstream>

#include "distmt/lsvi.hpp"

namespace distmt {
namespace {

enum StreamPhase : std::uint64_t { kAssign = 1, kProbe = 2, kLearn = 3, kMasterSeed = 4 };

struct AgentWork {
  RoundSubmission submission;
  Path path = Path::learned;
  Policy policy;
  long episodes = 0;
};

// Everything an agent does inside a round. It sees the task only through the
// sampling handle and the server only through the round-start snapshot.
AgentWork agent_step(const AgentState& agent, const Environmentd& env, const FeatureMapd& features,
                     const ServerTables& snapshot, const ProtocolParams& params, std::uint64_t seed, int round) {
  AgentWork work;
  work.submission.agent_id = agent.agent_id;
  work.submission.round = round;

  Rng probe_rng = make_stream(seed, {kProbe, static_cast<std::uint64_t>(agent.agent_id),
                                     static_cast<std::uint64_t>(round)});
  const Dataset probe_data = exp_ph(env, features, params.beta1, params.k1, probe_rng);
  auto probe = planning(probe_data, features, params.beta1);
  work.submission.v1_probe = probe.v1;
  work.submission.probe_stats = std::move(probe.stats);
  work.episodes = params.k1;

  if (const auto label = identify(snapshot, work.submission.v1_probe)) {
    if (*label > agent.ell_local)
      throw ProtocolError("agent " + std::to_string(agent.agent_id) + " identified label " +
                          std::to_string(*label) + " that it has not received");
    work.submission.identified_label = *label;
    work.path = Path::identified;
    work.policy = greedy_policy(agent.known_f[static_cast<std::size_t>(*label - 1)].stats, features);
    return work;
  }

  Rng learn_rng = make_stream(seed, {kLearn, static_cast<std::uint64_t>(agent.agent_id),
                                     static_cast<std::uint64_t>(round)});
  const Dataset learn_data = exp_ph(env, features, params.beta2, params.k2, learn_rng);
  auto solved = planning(learn_data, features, params.beta2);
  work.policy = greedy_policy(solved.stats, features);
  work.submission.solved_stats = std::move(solved.stats);
  work.path = Path::learned;
  work.episodes += params.k2;
  return work;
}

int dominant_misses(const std::vector<int>& counts) {
  int total = 0;
  int best = 0;
  for (int c : counts) {
    total += c;
    best = std::max(best, c);
  }
  return total - best;
}

}  // namespace

int default_rounds(int num_tasks, int num_agents, double delta) {
  if (num_tasks < 1 || num_agents < 1 || !(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("default_rounds: need M, N >= 1 and delta in (0, 1)");
  const double t = 6.0 * num_tasks * std::log(num_tasks / delta) / num_agents;
  return std::max(1, static_cast<int>(std::ceil(t)));
}

int assign_task(std::uint64_t seed, int agent_id, int round, int num_tasks) {
  Rng rng = make_stream(seed, {kAssign, static_cast<std::uint64_t>(agent_id), static_cast<std::uint64_t>(round)});
  return std::uniform_int_distribution<int>(1, num_tasks)(rng);
}

const char* to_string(Path path) { return path == Path::identified ? "identified" : "learned"; }

RoundResult run_round(std::vector<AgentState>& agents, ServerTables& server, const RoundContext& context) {
  const TaskPool& pool = *context.pool;
  const FeatureMapd& features = *pool.features;
  const ServerTables snapshot = server;
  const auto n = agents.size();

  std::vector<int> hidden(n);
  for (std::size_t i = 0; i < n; ++i)
    hidden[i] = assign_task(context.seed, agents[i].agent_id, context.round, pool.size());

  auto work_for = [&](std::size_t i) {
    const Environmentd env(pool.task(hidden[i]));
    return agent_step(agents[i], env, features, snapshot, context.params, context.seed, context.round);
  };
  std::vector<AgentWork> work(n);
  if (context.parallel && n > 1) {
    std::vector<std::future<AgentWork>> futures;
    futures.reserve(n);
    for (std::size_t i = 0; i < n; ++i) futures.push_back(std::async(std::launch::async, work_for, i));
    for (std::size_t i = 0; i < n; ++i) work[i] = futures[i].get();
  } else {
    for (std::size_t i = 0; i < n; ++i) work[i] = work_for(i);
  }

  // Barrier: submissions travel through the wire format in agent order.
  std::vector<RoundSubmission> submissions;
  submissions.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    submissions.push_back(submission_from_message(probe_message(work[i].submission)));
    agents[i].messages_sent += work[i].path == Path::learned ? 2 : 1;
  }
  GroupUpdate update = group_update(std::move(server), submissions);
  server = std::move(update.tables);
  const json broadcast = broadcast_message(context.round, update.new_entries);

  RoundResult result;
  result.duplicate_solves = update.duplicate_solves;
  for (std::size_t i = 0; i < n; ++i) {
    AgentState& agent = agents[i];
    for (auto& entry : entries_from_broadcast(broadcast)) {
      if (entry.label != agent.ell_local + 1) throw ProtocolError("broadcast entries out of order");
      agent.known_f.push_back(std::move(entry));
      agent.ell_local += 1;
    }
    agent.messages_received += 1;
    agent.probe_episodes += context.params.k1;
    if (work[i].path == Path::learned) {
      agent.learn_episodes += context.params.k2;
      agent.learned_rounds += 1;
    }

    RoundOutcome outcome;
    outcome.agent_id = agent.agent_id;
    outcome.round = context.round;
    outcome.hidden_label = hidden[i];
    outcome.resolved_label = update.assigned_labels[i];
    outcome.path = work[i].path;
    outcome.episodes_used = work[i].episodes;
    outcome.v1_probe = work[i].submission.v1_probe;
    outcome.policy_gap = optimality_gap(pool.task(hidden[i]), work[i].policy);
    outcome.policy = std::move(work[i].policy);
    result.outcomes.push_back(std::move(outcome));
  }
  return result;
}

long SimulationReport::episode_bound() const {
  return static_cast<long>(rounds) * (params.k1 + params.k2);
}

int SimulationReport::bound_violations() const {
  int violations = 0;
  for (const auto& a : agents)
    if (a.episodes > episode_bound()) ++violations;
  return violations;
}

int SimulationReport::misgroupings() const {
  int misses = 0;
  for (const auto& row : confusion) misses += dominant_misses(row);
  for (int l = 0; l < num_groups; ++l) {
    std::vector<int> column;
    for (const auto& row : confusion) column.push_back(row[static_cast<std::size_t>(l)]);
    misses += dominant_misses(column);
  }
  return misses;
}

bool SimulationReport::all_tasks_discovered() const {
  for (const auto& row : confusion) {
    int total = 0;
    for (int c : row) total += c;
    if (total == 0) return false;
  }
  return true;
}

bool SimulationReport::every_agent_knows_all() const {
  for (const auto& a : agents)
    if (a.known_labels < num_tasks) return false;
  return true;
}

double SimulationReport::mean_gap() const {
  if (outcomes.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& o : outcomes) sum += o.policy_gap;
  return sum / static_cast<double>(outcomes.size());
}

int SimulationReport::eps_failures(bool learned_only) const {
  int failures = 0;
  for (const auto& o : outcomes) {
    if (learned_only && o.path != Path::learned) continue;
    if (o.policy_gap > epsilon) ++failures;
  }
  return failures;
}

double SimulationReport::mean_episodes_per_agent() const {
  if (agents.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& a : agents) sum += static_cast<double>(a.episodes);
  return sum / static_cast<double>(agents.size());
}

double SimulationReport::mean_learn_episodes_per_agent() const {
  if (agents.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& a : agents) sum += static_cast<double>(a.learn_episodes);
  return sum / static_cast<double>(agents.size());
}

SimulationReport run_simulation(const TaskPool& pool, const SimulationConfig& config, std::uint64_t seed) {
  const ProtocolParams& p = config.params;
  if (config.num_agents < 1 || p.k1 < 1 || p.k2 < 1 || !(p.beta1 > 0.0) || !(p.beta2 > 0.0))
    throw std::invalid_argument("run_simulation: agents, K1, K2, beta1, beta2 must be positive");
  const int rounds = config.rounds ? *config.rounds : default_rounds(pool.size(), config.num_agents, config.delta);

  std::vector<AgentState> agents(static_cast<std::size_t>(config.num_agents));
  for (int i = 0; i < config.num_agents; ++i) agents[static_cast<std::size_t>(i)].agent_id = i + 1;
  ServerTables server(pool.c_sep, pool.size());

  SimulationReport report;
  report.seed = seed;
  report.num_agents = config.num_agents;
  report.num_tasks = pool.size();
  report.rounds = rounds;
  report.params = p;
  report.epsilon = config.epsilon;
  report.delta = config.delta;

  RoundContext context{&pool, p, seed, 1, config.parallel};
  for (int t = 1; t <= rounds; ++t) {
    context.round = t;
    RoundResult result = run_round(agents, server, context);
    report.duplicate_solves += result.duplicate_solves;
    for (auto& o : result.outcomes) report.outcomes.push_back(std::move(o));
  }

  report.anomalies = server.anomalies;
  report.num_groups = server.ell;
  report.groups = server.g;
  report.confusion.assign(static_cast<std::size_t>(pool.size()),
                          std::vector<int>(static_cast<std::size_t>(server.ell), 0));
  for (const auto& o : report.outcomes)
    report.confusion[static_cast<std::size_t>(o.hidden_label - 1)][static_cast<std::size_t>(o.resolved_label - 1)]++;
  for (const auto& a : agents)
    report.agents.push_back({a.agent_id, a.probe_episodes, a.learn_episodes, a.episodes(), a.learned_rounds,
                             a.ell_local, a.messages_sent, a.messages_received});
  return report;
}

SimulationReport run_simulation(const PoolConfig& pool_config, const SimulationConfig& config, Rng& rng) {
  const TaskPool pool = generate_task_pool(pool_config, rng);
  const std::uint64_t seed = rng();
  return run_simulation(pool, config, seed);
}

std::string format_real(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_run_csv(std::ostream& out, const SimulationReport& report, const json& config_header) {
  out << "# distmt run\n";
  out << "# config: " << config_header.dump() << "\n";
  out << "# seed: " << report.seed << "\n";
  out << kRunCsvColumns << "\n";
  for (const auto& o : report.outcomes) {
    out << o.agent_id << ',' << o.round << ',' << o.hidden_label << ',' << o.resolved_label << ','
        << to_string(o.path) << ',' << o.episodes_used << ',' << format_real(o.v1_probe) << ','
        << format_real(o.policy_gap) << '\n';
  }
}

std::vector<RunCsvRow> read_run_csv(std::istream& in) {
  std::vector<RunCsvRow> rows;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      if (line != kRunCsvColumns) throw std::invalid_argument("unexpected run CSV header: " + line);
      header_seen = true;
      continue;
    }
    std::istringstream fields(line);
    std::vector<std::string> cells;
    std::string cell;
    while (std::getline(fields, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) throw std::invalid_argument("run CSV row has wrong arity: " + line);
    rows.push_back({std::stoi(cells[0]), std::stoi(cells[1]), std::stoi(cells[2]), std::stoi(cells[3]), cells[4],
                    std::stol(cells[5]), std::stod(cells[6]), std::stod(cells[7])});
  }
  return rows;
}

json summary_json(const SimulationReport& report) {
  json agents = json::array();
  for (const auto& a : report.agents) {
    agents.push_back({{"agent_id", a.agent_id},
                      {"probe_episodes", a.probe_episodes},
                      {"learn_episodes", a.learn_episodes},
                      {"episodes", a.episodes},
                      {"learned_rounds", a.learned_rounds},
                      {"known_labels", a.known_labels},
                      {"messages_sent", a.messages_sent},
                      {"messages_received", a.messages_received}});
  }
  return {
      {"seed", report.seed},
      {"num_agents", report.num_agents},
      {"num_tasks", report.num_tasks},
      {"rounds", report.rounds},
      {"params",
       {{"beta1", report.params.beta1},
        {"beta2", report.params.beta2},
        {"k1", report.params.k1},
        {"k2", report.params.k2}}},
      {"epsilon", report.epsilon},
      {"delta", report.delta},
      {"episode_bound", report.episode_bound()},
      {"bound_violations", report.bound_violations()},
      {"mean_episodes_per_agent", report.mean_episodes_per_agent()},
      {"mean_learn_episodes_per_agent", report.mean_learn_episodes_per_agent()},
      {"mean_gap", report.mean_gap()},
      {"eps_failures", report.eps_failures(false)},
      {"duplicate_solves", report.duplicate_solves},
      {"anomalies",
       {{"multiple_matches", report.anomalies.multiple_matches},
        {"group_overflow", report.anomalies.group_overflow},
        {"late_mismatch", report.anomalies.late_mismatch}}},
      {"num_groups", report.num_groups},
      {"misgroupings", report.misgroupings()},
      {"confusion", report.confusion},
      {"all_tasks_discovered", report.all_tasks_discovered()},
      {"every_agent_knows_all", report.every_agent_knows_all()},
      {"agents", std::move(agents)},
  };
}

}  // namespace distmt
