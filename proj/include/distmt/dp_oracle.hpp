#pragma once

#include "distmt/linear_mdp.hpp"

namespace distmt {

// Exact finite-horizon values. v has H+1 entries (v[H] == 0), q has H
// entries of shape |S| x |A|.
template <typename Scalar>
struct ValueTable {
  std::vector<Vec<Scalar>> v;
  std::vector<Mat<Scalar>> q;

  int horizon() const { return static_cast<int>(q.size()); }
};

// Backward induction with the Bellman optimality operator.
template <typename Scalar>
ValueTable<Scalar> optimal_values(const LinearTask<Scalar>& task) {
  const int horizon = task.horizon();
  const int num_states = task.num_states();
  const int num_actions = task.num_actions();
  ValueTable<Scalar> table;
  table.v.assign(static_cast<std::size_t>(horizon + 1), Vec<Scalar>::Zero(num_states));
  table.q.assign(static_cast<std::size_t>(horizon), Mat<Scalar>::Zero(num_states, num_actions));
  for (int h = horizon - 1; h >= 0; --h) {
    const auto hs = static_cast<std::size_t>(h);
    // (S*A) vector of r + P v_{h+1}, reshaped to S x A (row-major over (s, a)).
    const Vec<Scalar> flat = task.reward_table(h) + task.transition_table(h) * table.v[hs + 1];
    for (int s = 0; s < num_states; ++s)
      for (int a = 0; a < num_actions; ++a)
        table.q[hs](s, a) = flat(static_cast<Eigen::Index>(s) * num_actions + a);
    table.v[hs] = table.q[hs].rowwise().maxCoeff();
  }
  return table;
}

// Greedy policy from a Q table; ties go to the lowest action index.
template <typename Scalar>
Policy greedy_policy(const ValueTable<Scalar>& table) {
  const int horizon = table.horizon();
  const int num_states = horizon > 0 ? static_cast<int>(table.q.front().rows()) : 0;
  Policy policy(horizon, num_states);
  for (int h = 0; h < horizon; ++h) {
    const auto& q = table.q[static_cast<std::size_t>(h)];
    for (int s = 0; s < num_states; ++s) {
      Action best = 0;
      for (Action a = 1; a < q.cols(); ++a)
        if (q(s, a) > q(s, best)) best = a;
      policy.at(h, s) = best;
    }
  }
  return policy;
}

// V^pi_h for every step and state, by backward induction without the max.
template <typename Scalar>
std::vector<Vec<Scalar>> evaluate_policy(const LinearTask<Scalar>& task, const Policy& policy) {
  if (policy.horizon() != task.horizon() || policy.num_states() != task.num_states())
    throw std::invalid_argument("policy shape does not match task");
  const int horizon = task.horizon();
  const int num_states = task.num_states();
  const auto& features = task.features();
  std::vector<Vec<Scalar>> v(static_cast<std::size_t>(horizon + 1), Vec<Scalar>::Zero(num_states));
  for (int h = horizon - 1; h >= 0; --h) {
    const auto hs = static_cast<std::size_t>(h);
    const auto& p = task.transition_table(h);
    const auto& r = task.reward_table(h);
    for (State s = 0; s < num_states; ++s) {
      const Eigen::Index idx = features.index(s, policy(h, s));
      v[hs](s) = r(idx) + p.row(idx).dot(v[hs + 1]);
    }
  }
  return v;
}

// V^pi_1(s0).
template <typename Scalar>
Scalar policy_value(const LinearTask<Scalar>& task, const Policy& policy) {
  return evaluate_policy(task, policy).front()(task.initial_state());
}

template <typename Scalar>
Scalar optimal_value(const LinearTask<Scalar>& task) {
  return optimal_values(task).v.front()(task.initial_state());
}

// V*_1(s0) - V^pi_1(s0).
template <typename Scalar>
Scalar optimality_gap(const LinearTask<Scalar>& task, const Policy& policy) {
  return optimal_value(task) - policy_value(task, policy);
}

template <typename Scalar>
bool is_eps_optimal(const LinearTask<Scalar>& task, const Policy& policy, Scalar epsilon) {
  return policy_value(task, policy) >= optimal_value(task) - epsilon;
}

}  // namespace distmt
