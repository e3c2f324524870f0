#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "distmt/protocol.hpp"

namespace distmt {

// Defaults are the standard small setup; K1 and K2 are the calibrated values
// recorded in data/calibration_baseline.json.
struct ExperimentConfig {
  PoolConfig pool{.dim = 3, .horizon = 4, .num_tasks = 6, .num_states = 5, .num_actions = 3, .c_sep = 0.5};
  std::uint64_t pool_seed = 11;
  int num_agents = 3;
  double delta = 0.05;
  double epsilon = 0.5;
  ProtocolParams params;
  std::optional<int> rounds;
  std::vector<std::uint64_t> seeds{1};
  int parallelism = 1;
  std::string output_dir = ".";

  // Throws std::invalid_argument naming the first bad field.
  void validate() const;
  SimulationConfig simulation() const;
};

json to_json(const ExperimentConfig& config);
// The config minus fields that cannot change results (output_dir, parallelism);
// this is what emitted files carry in their header.
json provenance_header(const ExperimentConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
ExperimentConfig experiment_config_from_json(const json& j, ExperimentConfig base = {});

struct TheoryConstants {
  double c_beta1 = 1.0;
  double c_k1 = 1.0;
  double c_beta2 = 1.0;
  double c_k2 = 1.0;
};

struct TheoryParams {
  double beta1 = 0.0;
  double k1 = 0.0;
  double beta2 = 0.0;
  double k2 = 0.0;
  double rounds = 0.0;
};

// The functional forms of the bonus scales, episode counts and round count.
// Returned unrounded; callers take ceilings. Throws std::domain_error when a
// logarithm's argument is <= 1.
TheoryParams theoretical_params(int dim, int horizon, int num_tasks, int num_agents, double delta,
                                double epsilon, double c_sep, const TheoryConstants& constants = {});

struct CalibrationResult {
  int k = 0;
  double rate = 0.0;  // fraction of trials with |v1 - V*| <= target at k
  std::vector<std::pair<int, double>> history;
};

class CalibrationError : public std::runtime_error {
 public:
  CalibrationError(const std::string& what, CalibrationResult best)
      : std::runtime_error(what), best_(std::move(best)) {}
  const CalibrationResult& best() const { return best_; }

 private:
  CalibrationResult best_;
};

inline constexpr int kCalibrationTrials = 50;
inline constexpr double kCalibrationRate = 0.95;

// The two labels with the closest optimal values (a single task pairs with itself).
std::pair<int, int> hardest_pair(const TaskPool& pool);

// Smallest K in 1, 2, 4, ... <= budget for which exploration followed by
// planning lands within target of V* in at least 95% of 50 trials split
// across the hardest pair.
CalibrationResult calibrate_k(const TaskPool& pool, double beta, double target, int budget, std::uint64_t seed);

struct SweepRow {
  int num_agents = 0;
  std::uint64_t seed = 0;
  double mean_episodes_per_agent = 0.0;
  double mean_gap = 0.0;
  int duplicate_solves = 0;
  long anomalies = 0;
  double mean_learn_episodes_per_agent = 0.0;
  int misgroupings = 0;
  int bound_violations = 0;
  int eps_failures = 0;
  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

struct SweepReport {
  std::vector<SweepRow> rows;

  // Average of mean_learn_episodes_per_agent over seeds for one N.
  double mean_learn_episodes(int num_agents) const;
};

// One simulation per (N, seed) on a single pool.
SweepReport sweep_agents(const TaskPool& pool, const ExperimentConfig& config, const std::vector<int>& n_values,
                         const std::vector<std::uint64_t>& seeds);

inline constexpr const char* kSweepCsvColumns =
    "N,seed,mean_episodes_per_agent,mean_gap,duplicate_solves,anomalies,mean_learn_episodes_per_agent,"
    "misgroupings,bound_violations,eps_failures";

void write_sweep_csv(std::ostream& out, const SweepReport& report, const json& config_header);
SweepReport read_sweep_csv(std::istream& in);

}  // namespace distmt
