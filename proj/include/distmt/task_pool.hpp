#pragma once

#include <memory>
#include <string>
#include <vector>

#include "distmt/dp_oracle.hpp"
#include "distmt/serialization.hpp"

namespace distmt {

struct PoolConfig {
  int dim = 3;
  int horizon = 4;
  int num_tasks = 5;
  int num_states = 5;
  int num_actions = 3;
  double c_sep = 0.3;
  State initial_state = 0;
  int max_attempts = 10000;
};

// M tasks over a shared feature map, pairwise separated in V*_1(s0) by more
// than c_sep. Task labels are 1..M and are visible only to the harness.
struct TaskPool {
  std::shared_ptr<const FeatureMapd> features;
  std::vector<LinearTaskd> tasks;
  double c_sep = 0.0;
  State initial_state = 0;
  std::vector<double> optimal_values;

  int size() const { return static_cast<int>(tasks.size()); }
  int horizon() const { return tasks.front().horizon(); }
  const LinearTaskd& task(int label) const { return tasks.at(static_cast<std::size_t>(label - 1)); }

  // Smallest |V*_m - V*_m'| over pairs; +inf for a single task.
  double min_separation() const;
};

class ConstructionError : public std::runtime_error {
 public:
  ConstructionError(const std::string& what, std::vector<double> achieved)
      : std::runtime_error(what), achieved_(std::move(achieved)) {}
  // V*_1(s0) of the members accepted before giving up.
  const std::vector<double>& achieved_values() const { return achieved_; }

 private:
  std::vector<double> achieved_;
};

// phi(s, a) drawn uniformly on the probability simplex (so ||phi||_2 <= 1).
std::shared_ptr<const FeatureMapd> random_feature_map(int num_states, int num_actions, int dim, Rng& rng);

// A linear task whose d latent next-state measures are random distributions
// and whose reward parameter sits around reward_level in [0, 1]^d.
LinearTaskd random_linear_task(std::shared_ptr<const FeatureMapd> features, int horizon, State initial_state,
                               int label, double reward_level, Rng& rng);

TaskPool generate_task_pool(const PoolConfig& config, Rng& rng);

json to_json(const TaskPool& pool);
// Rebuilds and re-validates every task; stored optimal values are checked
// against the oracle.
TaskPool pool_from_json(const json& j);

}  // namespace distmt
