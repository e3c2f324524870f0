#pragma once

// Reference implementations used only by tests. They deliberately avoid the
// library's cached tables and Eigen products: probabilities come from explicit
// dot products of mu rows with phi columns.

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "distmt/harness.hpp"

namespace distmt::testing {

inline double naive_prob(const LinearTaskd& task, int h, State s, Action a, State next) {
  const auto& mu = task.mu(h);
  const auto& phi = task.features().matrix();
  const Eigen::Index col = static_cast<Eigen::Index>(s) * task.num_actions() + a;
  double p = 0.0;
  for (int j = 0; j < task.dim(); ++j) p += mu(next, j) * phi(j, col);
  return p;
}

inline double naive_reward(const LinearTaskd& task, int h, State s, Action a) {
  const auto& eta = task.eta(h);
  const auto& phi = task.features().matrix();
  const Eigen::Index col = static_cast<Eigen::Index>(s) * task.num_actions() + a;
  double r = 0.0;
  for (int j = 0; j < task.dim(); ++j) r += eta(j) * phi(j, col);
  return r;
}

// V^pi_h for every h and s by explicit loops.
inline std::vector<std::vector<double>> naive_evaluate(const LinearTaskd& task, const Policy& policy) {
  const int H = task.horizon();
  const int S = task.num_states();
  std::vector<std::vector<double>> v(static_cast<std::size_t>(H + 1), std::vector<double>(static_cast<std::size_t>(S), 0.0));
  for (int h = H - 1; h >= 0; --h)
    for (int s = 0; s < S; ++s) {
      const Action a = policy(h, s);
      double q = naive_reward(task, h, s, a);
      for (int n = 0; n < S; ++n) q += naive_prob(task, h, s, a, n) * v[h + 1][n];
      v[h][s] = q;
    }
  return v;
}

// Largest V^pi_1(s0) over every deterministic Markov policy.
inline double brute_force_optimum(const LinearTaskd& task) {
  const int H = task.horizon();
  const int S = task.num_states();
  const int A = task.num_actions();
  const int slots = H * S;
  Policy policy(H, S);
  double best = -std::numeric_limits<double>::infinity();
  std::vector<int> digits(static_cast<std::size_t>(slots), 0);
  while (true) {
    for (int i = 0; i < slots; ++i) policy.at(i / S, i % S) = digits[i];
    best = std::max(best, naive_evaluate(task, policy)[0][task.initial_state()]);
    int i = 0;
    while (i < slots && ++digits[i] == A) digits[i++] = 0;
    if (i == slots) break;
  }
  return best;
}

// Optimal values by explicit loops, for pools too large to enumerate.
inline double naive_optimal_value(const LinearTaskd& task) {
  const int H = task.horizon();
  const int S = task.num_states();
  const int A = task.num_actions();
  std::vector<double> next(static_cast<std::size_t>(S), 0.0), cur(static_cast<std::size_t>(S));
  for (int h = H - 1; h >= 0; --h) {
    for (int s = 0; s < S; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < A; ++a) {
        double q = naive_reward(task, h, s, a);
        for (int n = 0; n < S; ++n) q += naive_prob(task, h, s, a, n) * next[n];
        best = std::max(best, q);
      }
      cur[s] = best;
    }
    next = cur;
  }
  return next[task.initial_state()];
}

// Tabular MDP embedded with one-hot features over (s, a): d = S * A.
inline LinearTaskd tabular_task(const std::vector<std::vector<std::vector<std::vector<double>>>>& p,  // [h][s][a][s']
                                const std::vector<std::vector<std::vector<double>>>& r,               // [h][s][a]
                                State s0 = 0) {
  const int H = static_cast<int>(p.size());
  const int S = static_cast<int>(p[0].size());
  const int A = static_cast<int>(p[0][0].size());
  const int d = S * A;
  auto features = std::make_shared<const FeatureMapd>(S, A, Mat<double>::Identity(d, d));
  std::vector<Mat<double>> mu;
  std::vector<Vec<double>> eta;
  for (int h = 0; h < H; ++h) {
    Mat<double> m = Mat<double>::Zero(S, d);
    Vec<double> e(d);
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        for (int n = 0; n < S; ++n) m(n, s * A + a) = p[h][s][a][n];
        e(s * A + a) = r[h][s][a];
      }
    mu.push_back(m);
    eta.push_back(e);
  }
  return LinearTaskd(features, mu, eta, s0);
}

inline LinearTaskd random_task(std::uint64_t seed, int num_states, int num_actions, int dim, int horizon,
                               double reward_level = 0.5) {
  Rng rng(seed);
  auto features = random_feature_map(num_states, num_actions, dim, rng);
  return random_linear_task(features, horizon, 0, 1, reward_level, rng);
}

inline Policy random_policy(int horizon, int num_states, int num_actions, Rng& rng) {
  std::uniform_int_distribution<int> pick(0, num_actions - 1);
  Policy policy(horizon, num_states);
  for (int h = 0; h < horizon; ++h)
    for (int s = 0; s < num_states; ++s) policy.at(h, s) = pick(rng);
  return policy;
}

// Pool built from hand-made tasks; optimal values from the naive oracle.
inline TaskPool pool_of(std::vector<LinearTaskd> tasks, double c_sep) {
  TaskPool pool;
  pool.features = tasks.front().shared_features();
  pool.c_sep = c_sep;
  pool.initial_state = tasks.front().initial_state();
  for (const auto& t : tasks) pool.optimal_values.push_back(naive_optimal_value(t));
  pool.tasks = std::move(tasks);
  return pool;
}

inline bool symmetric(const Mat<double>& m, double tol = 1e-12) {
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

inline double min_eigenvalue(const Mat<double>& m) {
  Eigen::SelfAdjointEigenSolver<Mat<double>> solver(m);
  return solver.eigenvalues().minCoeff();
}

}  // namespace distmt::testing
