#include "distmt/coordination.hpp"

#include <algorithm>
#include <cmath>

namespace distmt {
namespace {

void check_version(const json& message) {
  if (message.at("schema_version").get<int>() != kSchemaVersion)
    throw ProtocolError("unsupported message schema_version");
}

void admit_new_group(ServerTables& tables, double probe, const PolicyStatsd& stats,
                     std::vector<PolicyEntry>& new_entries) {
  tables.ell += 1;
  tables.g.push_back({probe});
  tables.f.push_back({stats, tables.ell});
  new_entries.push_back(tables.f.back());
  if (tables.capacity > 0 && tables.ell > tables.capacity) ++tables.anomalies.group_overflow;
}

}  // namespace

std::vector<int> matching_labels(const ServerTables& tables, double v1_probe) {
  std::vector<int> labels;
  const double radius = tables.c_sep / 2.0;
  for (int m = 0; m < tables.ell; ++m) {
    const auto& group = tables.g[static_cast<std::size_t>(m)];
    if (std::all_of(group.begin(), group.end(), [&](double v) { return std::abs(v - v1_probe) <= radius; }))
      labels.push_back(m + 1);
  }
  return labels;
}

std::optional<int> identify(const ServerTables& tables, double v1_probe) {
  const auto labels = matching_labels(tables, v1_probe);
  if (labels.empty()) return std::nullopt;
  return labels.front();
}

GroupUpdate group_update(ServerTables tables, const std::vector<RoundSubmission>& submissions) {
  GroupUpdate out;
  for (const auto& sub : submissions) {
    const auto labels = matching_labels(tables, sub.v1_probe);
    if (labels.size() > 1) ++tables.anomalies.multiple_matches;
    if (!labels.empty()) {
      const int m = labels.front();
      tables.g[static_cast<std::size_t>(m - 1)].push_back(sub.v1_probe);
      out.assigned_labels.push_back(m);
      if (sub.solved_stats) ++out.duplicate_solves;
      continue;
    }
    if (sub.solved_stats) {
      admit_new_group(tables, sub.v1_probe, *sub.solved_stats, out.new_entries);
      out.assigned_labels.push_back(tables.ell);
      continue;
    }
    if (sub.identified_label && *sub.identified_label >= 1 && *sub.identified_label <= tables.ell) {
      const int m = *sub.identified_label;
      tables.g[static_cast<std::size_t>(m - 1)].push_back(sub.v1_probe);
      out.assigned_labels.push_back(m);
      ++tables.anomalies.late_mismatch;
      continue;
    }
    throw ProtocolError("unidentified submission from agent " + std::to_string(sub.agent_id) +
                        " carries no solved policy statistics");
  }
  out.tables = std::move(tables);
  return out;
}

json probe_message(const RoundSubmission& submission) {
  json message = {
      {"schema_version", kSchemaVersion},
      {"agent_id", submission.agent_id},
      {"round", submission.round},
      {"v1_probe", submission.v1_probe},
      {"probe_stats", to_json(submission.probe_stats)},
  };
  if (submission.solved_stats) message["policy_stats"] = to_json(*submission.solved_stats);
  if (submission.identified_label) message["identified_label"] = *submission.identified_label;
  return message;
}

RoundSubmission submission_from_message(const json& message) {
  check_version(message);
  RoundSubmission sub;
  sub.agent_id = message.at("agent_id").get<int>();
  sub.round = message.at("round").get<int>();
  sub.v1_probe = message.at("v1_probe").get<double>();
  if (message.contains("probe_stats")) sub.probe_stats = policy_stats_from_json(message.at("probe_stats"));
  if (message.contains("policy_stats")) sub.solved_stats = policy_stats_from_json(message.at("policy_stats"));
  if (message.contains("identified_label")) sub.identified_label = message.at("identified_label").get<int>();
  return sub;
}

json broadcast_message(int round, const std::vector<PolicyEntry>& new_entries) {
  json entries = json::array();
  for (const auto& entry : new_entries) {
    json e = to_json(entry.stats);
    e["label"] = entry.label;
    entries.push_back(std::move(e));
  }
  return {{"schema_version", kSchemaVersion}, {"round", round}, {"new_entries", std::move(entries)}};
}

std::vector<PolicyEntry> entries_from_broadcast(const json& message) {
  check_version(message);
  std::vector<PolicyEntry> entries;
  for (const auto& e : message.at("new_entries"))
    entries.push_back({policy_stats_from_json(e), e.at("label").get<int>()});
  return entries;
}

}  // namespace distmt
