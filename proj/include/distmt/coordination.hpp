#pragma once

#include <optional>
#include <vector>

#include "distmt/serialization.hpp"

namespace distmt {

inline constexpr int kSchemaVersion = 1;

struct AnomalyCounters {
  // A probe satisfied the admission rule for more than one group.
  long multiple_matches = 0;
  // More groups than the pool has tasks.
  long group_overflow = 0;
  // An agent identified against the round-start snapshot, but its probe no
  // longer fit that group once earlier same-round probes were admitted.
  long late_mismatch = 0;

  long total() const { return multiple_matches + group_overflow + late_mismatch; }
  friend bool operator==(const AnomalyCounters&, const AnomalyCounters&) = default;
};

struct PolicyEntry {
  PolicyStatsd stats;
  int label = 0;
};

// Server state: g[m-1] holds the value probes admitted to label m, f[m-1] the
// statistics of the policy that solved it.
struct ServerTables {
  std::vector<std::vector<double>> g;
  std::vector<PolicyEntry> f;
  int ell = 0;
  double c_sep = 0.0;
  int capacity = 0;  // M; exceeding it is allowed but flagged
  AnomalyCounters anomalies;

  ServerTables() = default;
  ServerTables(double c_sep_, int capacity_) : c_sep(c_sep_), capacity(capacity_) {}
};

struct RoundSubmission {
  int agent_id = 0;
  int round = 0;
  double v1_probe = 0.0;
  PolicyStatsd probe_stats;                 // transmitted, not stored by the server
  std::optional<PolicyStatsd> solved_stats;  // present iff the agent ran the learning phase
  std::optional<int> identified_label;       // the agent-side identification result, if any
};

// Every label whose whole group lies within c_sep/2 of the probe.
std::vector<int> matching_labels(const ServerTables& tables, double v1_probe);

// Smallest such label, or nothing.
std::optional<int> identify(const ServerTables& tables, double v1_probe);

struct GroupUpdate {
  ServerTables tables;
  std::vector<PolicyEntry> new_entries;
  // Label each submission ended up in, in submission order.
  std::vector<int> assigned_labels;
  // Submissions that carried solved statistics but joined an existing group.
  int duplicate_solves = 0;
};

// Admits one round of submissions in the order given (agent index order).
GroupUpdate group_update(ServerTables tables, const std::vector<RoundSubmission>& submissions);

// Wire format.
json probe_message(const RoundSubmission& submission);
RoundSubmission submission_from_message(const json& message);
json broadcast_message(int round, const std::vector<PolicyEntry>& new_entries);
std::vector<PolicyEntry> entries_from_broadcast(const json& message);

}  // namespace distmt
