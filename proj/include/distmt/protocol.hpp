#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "distmt/coordination.hpp"
#include "distmt/task_pool.hpp"

namespace distmt {

struct ProtocolParams {
  double beta1 = 0.3;  // probe phase
  double beta2 = 0.3;  // learning phase and returned policies
  int k1 = 1024;
  int k2 = 32;
};

struct SimulationConfig {
  int num_agents = 1;
  double delta = 0.05;
  double epsilon = 0.5;
  ProtocolParams params;
  std::optional<int> rounds;  // default: ceil(6 M ln(M / delta) / N)
  bool parallel = false;
};

// ceil(6 M ln(M / delta) / N).
int default_rounds(int num_tasks, int num_agents, double delta);

// Hidden task m_{i,t} ~ Unif([M]), a pure function of (seed, agent, round).
int assign_task(std::uint64_t seed, int agent_id, int round, int num_tasks);

struct AgentState {
  int agent_id = 0;
  std::vector<PolicyEntry> known_f;  // labels 1..ell_local in order
  int ell_local = 0;
  long probe_episodes = 0;
  long learn_episodes = 0;
  int learned_rounds = 0;
  long messages_sent = 0;
  long messages_received = 0;

  long episodes() const { return probe_episodes + learn_episodes; }
};

enum class Path { identified, learned };
const char* to_string(Path path);

struct RoundOutcome {
  int agent_id = 0;
  int round = 0;
  int hidden_label = 0;    // harness only
  int resolved_label = 0;  // server label after the round's grouping
  Path path = Path::learned;
  Policy policy;
  long episodes_used = 0;
  double v1_probe = 0.0;
  double policy_gap = 0.0;  // V* - V^pi on the hidden task
};

struct RoundContext {
  const TaskPool* pool = nullptr;
  ProtocolParams params;
  std::uint64_t seed = 0;
  int round = 1;
  bool parallel = false;
};

struct RoundResult {
  std::vector<RoundOutcome> outcomes;
  int duplicate_solves = 0;
};

// One protocol round for all agents followed by the server barrier: every
// agent probes, identifies against the round-start tables, learns if needed;
// then the server groups the submissions and broadcasts new entries.
RoundResult run_round(std::vector<AgentState>& agents, ServerTables& server, const RoundContext& context);

struct AgentTotals {
  int agent_id = 0;
  long probe_episodes = 0;
  long learn_episodes = 0;
  long episodes = 0;
  int learned_rounds = 0;
  int known_labels = 0;
  long messages_sent = 0;
  long messages_received = 0;
};

struct SimulationReport {
  std::uint64_t seed = 0;
  int num_agents = 0;
  int num_tasks = 0;
  int rounds = 0;
  ProtocolParams params;
  double epsilon = 0.0;
  double delta = 0.0;
  std::vector<RoundOutcome> outcomes;
  std::vector<AgentTotals> agents;
  int duplicate_solves = 0;
  AnomalyCounters anomalies;
  int num_groups = 0;
  // confusion[m-1][l-1]: submissions of hidden task m resolved to label l.
  std::vector<std::vector<int>> confusion;
  std::vector<std::vector<double>> groups;

  long episode_bound() const;  // T (K1 + K2)
  int bound_violations() const;
  // Zero iff the grouping is a one-to-one relabeling of the hidden tasks.
  int misgroupings() const;
  bool all_tasks_discovered() const;
  bool every_agent_knows_all() const;
  double mean_gap() const;
  int eps_failures(bool learned_only) const;
  double mean_episodes_per_agent() const;
  double mean_learn_episodes_per_agent() const;
};

SimulationReport run_simulation(const TaskPool& pool, const SimulationConfig& config, std::uint64_t seed);
// Generates the pool from the stream, then draws the master seed from it.
SimulationReport run_simulation(const PoolConfig& pool_config, const SimulationConfig& config, Rng& rng);

inline constexpr const char* kRunCsvColumns =
    "agent_id,round,hidden_label,resolved_label,path,episodes_used,v1_probe,policy_gap";

// One row per (agent, round), preceded by '#' header lines with the config.
void write_run_csv(std::ostream& out, const SimulationReport& report, const json& config_header);
json summary_json(const SimulationReport& report);

struct RunCsvRow {
  int agent_id = 0;
  int round = 0;
  int hidden_label = 0;
  int resolved_label = 0;
  std::string path;
  long episodes_used = 0;
  double v1_probe = 0.0;
  double policy_gap = 0.0;
  friend bool operator==(const RunCsvRow&, const RunCsvRow&) = default;
};
std::vector<RunCsvRow> read_run_csv(std::istream& in);

// %.17g: round-trips through strtod.
std::string format_real(double x);

}  // namespace distmt
