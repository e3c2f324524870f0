#pragma once

#include <cmath>
#include <concepts>
#include <functional>
#include <optional>
#include <span>

#include "distmt/linear_mdp.hpp"

namespace distmt {

inline constexpr double kNegativeQuadratic = 1e-12;

// ||v||_{m_inv} = sqrt(v^T m_inv v).
template <typename Scalar, typename VDerived, typename MDerived>
Scalar weighted_norm(const Eigen::MatrixBase<VDerived>& v, const Eigen::MatrixBase<MDerived>& m_inv) {
  const Scalar quad = v.dot(m_inv * v);
  if (!std::isfinite(static_cast<double>(quad)) || quad < -Scalar(kNegativeQuadratic))
    throw NumericError("weighted norm: matrix is not positive definite");
  return std::sqrt(std::max(quad, Scalar(0)));
}

template <typename Scalar>
Scalar weighted_norm(const Vec<Scalar>& v, const Mat<Scalar>& m_inv) {
  return weighted_norm<Scalar, Vec<Scalar>, Mat<Scalar>>(v, m_inv);
}

// Regularized Gram matrix I + sum phi phi^T with its inverse kept current by
// Sherman-Morrison rank-one updates. The inverse is recomputed from scratch
// every kRefactorInterval updates, or as soon as ||Lambda Lambda^-1 - I||_max
// drifts past kResidualTolerance.
template <typename Scalar>
class GramMatrix {
 public:
  static constexpr int kRefactorInterval = 64;
  static constexpr double kResidualTolerance = 1e-8;

  explicit GramMatrix(int dim)
      : gram_(Mat<Scalar>::Identity(dim, dim)), inverse_(Mat<Scalar>::Identity(dim, dim)) {}

  template <typename Derived>
  void add(const Eigen::MatrixBase<Derived>& phi) {
    gram_.noalias() += phi * phi.transpose();
    const Vec<Scalar> u = inverse_ * phi;
    const Scalar denom = Scalar(1) + phi.dot(u);
    inverse_.noalias() -= (u / denom) * u.transpose();
    ++updates_;
    if (++since_refactor_ >= kRefactorInterval || residual() > Scalar(kResidualTolerance))
      refactor();
  }

  void refactor() {
    const Eigen::Index d = gram_.rows();
    inverse_ = gram_.ldlt().solve(Mat<Scalar>::Identity(d, d));
    inverse_ = Scalar(0.5) * (inverse_ + inverse_.transpose()).eval();
    since_refactor_ = 0;
    ++refactors_;
  }

  Scalar residual() const {
    const Eigen::Index d = gram_.rows();
    return (gram_ * inverse_ - Mat<Scalar>::Identity(d, d)).cwiseAbs().maxCoeff();
  }

  int dim() const { return static_cast<int>(gram_.rows()); }
  const Mat<Scalar>& gram() const { return gram_; }
  const Mat<Scalar>& inverse() const { return inverse_; }
  long updates() const { return updates_; }
  long refactors() const { return refactors_; }

 private:
  Mat<Scalar> gram_;
  Mat<Scalar> inverse_;
  int since_refactor_ = 0;
  long updates_ = 0;
  long refactors_ = 0;
};

// Sufficient statistics of one step's ridge regression. Because the state
// space is finite, sum_tau phi_tau V(s'_tau) equals next_state_moment * V.
template <typename Scalar>
class StepStatistics {
 public:
  StepStatistics(int dim, int num_states)
      : gram_(dim),
        reward_moment_(Vec<Scalar>::Zero(dim)),
        next_state_moment_(Mat<Scalar>::Zero(dim, num_states)) {}

  template <typename Derived>
  void observe(const Eigen::MatrixBase<Derived>& phi, Scalar reward, std::optional<State> next) {
    gram_.add(phi);
    reward_moment_.noalias() += reward * phi;
    if (next) next_state_moment_.col(*next) += phi;
    ++count_;
  }

  // sum_tau phi_tau (reward_weight * r_tau + v_next(s'_tau)).
  Vec<Scalar> regression_target(Scalar reward_weight, const Vec<Scalar>& v_next) const {
    return reward_weight * reward_moment_ + next_state_moment_ * v_next;
  }

  GramMatrix<Scalar>& gram() { return gram_; }
  const GramMatrix<Scalar>& gram() const { return gram_; }
  const Vec<Scalar>& reward_moment() const { return reward_moment_; }
  const Mat<Scalar>& next_state_moment() const { return next_state_moment_; }
  long count() const { return count_; }

 private:
  GramMatrix<Scalar> gram_;
  Vec<Scalar> reward_moment_;
  Mat<Scalar> next_state_moment_;
  long count_ = 0;
};

// Folds one episode into per-step statistics.
template <typename Scalar>
void observe_episode(std::vector<StepStatistics<Scalar>>& steps, const FeatureMap<Scalar>& features,
                     const EpisodeRecord& episode) {
  const int horizon = static_cast<int>(steps.size());
  if (episode.length() != horizon) throw std::invalid_argument("episode length differs from horizon");
  for (int h = 0; h < horizon; ++h) {
    const auto& step = episode.steps[static_cast<std::size_t>(h)];
    if (!std::isfinite(step.reward)) throw NumericError("non-finite reward in dataset");
    std::optional<State> next;
    if (h + 1 < horizon) next = episode.steps[static_cast<std::size_t>(h + 1)].state;
    steps[static_cast<std::size_t>(h)].observe(features(step.state, step.action),
                                               static_cast<Scalar>(step.reward), next);
  }
}

template <typename Scalar>
std::vector<StepStatistics<Scalar>> make_statistics(const FeatureMap<Scalar>& features, int horizon) {
  return std::vector<StepStatistics<Scalar>>(static_cast<std::size_t>(horizon),
                                             StepStatistics<Scalar>(features.dim(), features.num_states()));
}

// (theta_h, Lambda_h) per step plus the bonus scale; induces a greedy policy.
template <typename Scalar>
struct PolicyStats {
  std::vector<Vec<Scalar>> theta;
  std::vector<Mat<Scalar>> lambda;
  Scalar beta = Scalar(0);

  int horizon() const { return static_cast<int>(theta.size()); }
};

// Exploration: targets carry no environment reward and Q gets u + u/H.
// Planning: targets carry the logged reward and Q gets u.
enum class Objective { exploration, planning };

template <typename Scalar>
struct BackwardPass {
  std::vector<Vec<Scalar>> theta;   // H
  std::vector<Vec<Scalar>> bonus;   // H, indexed s*A + a
  std::vector<Mat<Scalar>> q;       // H, |S| x |A|
  std::vector<Vec<Scalar>> v;       // H + 1, v[H] == 0
};

// min{beta ||phi(s,a)||_{lambda_inv}, H} for every (s, a).
template <typename Scalar>
Vec<Scalar> optimism_bonus(const FeatureMap<Scalar>& features, const Mat<Scalar>& lambda_inv,
                           Scalar beta, Scalar horizon) {
  const Mat<Scalar>& phi = features.matrix();
  const Vec<Scalar> quad = (phi.array() * (lambda_inv * phi).array()).colwise().sum().transpose();
  Vec<Scalar> bonus(quad.size());
  for (Eigen::Index i = 0; i < quad.size(); ++i) {
    if (!std::isfinite(static_cast<double>(quad(i))) || quad(i) < -Scalar(kNegativeQuadratic))
      throw NumericError("optimism bonus: Gram inverse is not positive definite");
    bonus(i) = std::min(beta * std::sqrt(std::max(quad(i), Scalar(0))), horizon);
  }
  return bonus;
}

// Clipped Q table from a regression estimate and bonus (extra is the
// exploration reward or zero).
template <typename Scalar>
Mat<Scalar> clipped_q(const FeatureMap<Scalar>& features, const Vec<Scalar>& theta,
                      const Vec<Scalar>& bonus, Scalar extra_scale, Scalar horizon) {
  const Vec<Scalar> flat = features.matrix().transpose() * theta + (Scalar(1) + extra_scale) * bonus;
  const int num_states = features.num_states();
  const int num_actions = features.num_actions();
  Mat<Scalar> q(num_states, num_actions);
  for (int s = 0; s < num_states; ++s)
    for (int a = 0; a < num_actions; ++a)
      q(s, a) = std::clamp(flat(static_cast<Eigen::Index>(s) * num_actions + a), Scalar(0), horizon);
  return q;
}

// argmax_a q(s, a) per state, lowest index on ties.
template <typename Scalar>
std::vector<Action> argmax_rows(const Mat<Scalar>& q) {
  std::vector<Action> best(static_cast<std::size_t>(q.rows()), 0);
  for (Eigen::Index s = 0; s < q.rows(); ++s)
    for (Eigen::Index a = 1; a < q.cols(); ++a)
      if (q(s, a) > q(s, best[static_cast<std::size_t>(s)])) best[static_cast<std::size_t>(s)] = static_cast<Action>(a);
  return best;
}

// The least-squares value iteration sweep shared by exploration and planning.
template <typename Scalar>
BackwardPass<Scalar> backward_pass(const FeatureMap<Scalar>& features,
                                   std::span<const StepStatistics<Scalar>> steps, Scalar beta,
                                   Objective objective) {
  const int horizon = static_cast<int>(steps.size());
  const auto hs = static_cast<std::size_t>(horizon);
  const Scalar cap = static_cast<Scalar>(horizon);
  const Scalar reward_weight = objective == Objective::planning ? Scalar(1) : Scalar(0);
  const Scalar extra_scale = objective == Objective::exploration ? Scalar(1) / cap : Scalar(0);

  BackwardPass<Scalar> pass;
  pass.theta.resize(hs);
  pass.bonus.resize(hs);
  pass.q.resize(hs);
  pass.v.assign(hs + 1, Vec<Scalar>::Zero(features.num_states()));
  for (int h = horizon - 1; h >= 0; --h) {
    const auto i = static_cast<std::size_t>(h);
    const Mat<Scalar>& lambda_inv = steps[i].gram().inverse();
    pass.theta[i] = lambda_inv * steps[i].regression_target(reward_weight, pass.v[i + 1]);
    if (!pass.theta[i].allFinite()) throw NumericError("non-finite regression estimate");
    pass.bonus[i] = optimism_bonus(features, lambda_inv, beta, cap);
    pass.q[i] = clipped_q(features, pass.theta[i], pass.bonus[i], extra_scale, cap);
    pass.v[i] = pass.q[i].rowwise().maxCoeff();
  }
  return pass;
}

template <typename Scalar>
Policy greedy_policy(const BackwardPass<Scalar>& pass) {
  std::vector<std::vector<Action>> table;
  table.reserve(pass.q.size());
  for (const auto& q : pass.q) table.push_back(argmax_rows(q));
  return Policy(std::move(table));
}

template <typename Env>
concept EpisodicEnvironment = requires(const Env& env, const Policy& policy, Rng& rng) {
  { env.run_episode(policy, rng) } -> std::same_as<EpisodeRecord>;
  { env.horizon() } -> std::convertible_to<int>;
};

// Called once per exploration episode k (0-based) with the backward pass that
// produced that episode's policy.
template <typename Scalar>
using ExplorationObserver = std::function<void(int, const BackwardPass<Scalar>&)>;

// Reward-free exploration: K episodes, each greedy w.r.t. optimistic values
// built from the exploration reward u/H only. Logged rewards are kept for
// planning but never enter the exploration regression.
template <typename Scalar, EpisodicEnvironment Env>
Dataset exp_ph(const Env& env, const FeatureMap<Scalar>& features, Scalar beta, int num_episodes,
               Rng& rng, const ExplorationObserver<Scalar>& observer = {}) {
  if (num_episodes < 1) throw std::invalid_argument("exp_ph: empty dataset requested (K = 0)");
  if (!(beta > Scalar(0))) throw std::invalid_argument("exp_ph: beta must be positive");
  const int horizon = env.horizon();
  auto steps = make_statistics(features, horizon);
  Dataset data;
  data.episodes.reserve(static_cast<std::size_t>(num_episodes));
  for (int k = 0; k < num_episodes; ++k) {
    const auto pass = backward_pass<Scalar>(features, steps, beta, Objective::exploration);
    if (observer) observer(k, pass);
    data.episodes.push_back(env.run_episode(greedy_policy(pass), rng));
    observe_episode(steps, features, data.episodes.back());
  }
  return data;
}

template <typename Scalar>
struct PlanningResult {
  PolicyStats<Scalar> stats;
  Scalar v1 = Scalar(0);
};

// Statistics over the whole dataset with exact (refactored) inverses.
template <typename Scalar>
std::vector<StepStatistics<Scalar>> dataset_statistics(const Dataset& dataset,
                                                       const FeatureMap<Scalar>& features) {
  if (dataset.empty()) throw std::invalid_argument("planning: empty dataset");
  const int horizon = dataset.episodes.front().length();
  const State s0 = horizon > 0 ? dataset.episodes.front().steps.front().state : 0;
  if (horizon < 1) throw std::invalid_argument("planning: zero-length episodes");
  auto steps = make_statistics(features, horizon);
  for (const auto& episode : dataset.episodes) {
    if (episode.length() != horizon || episode.steps.front().state != s0)
      throw std::invalid_argument("planning: episodes must share horizon and initial state");
    observe_episode(steps, features, episode);
  }
  for (auto& step : steps) step.gram().refactor();
  return steps;
}

template <typename Scalar>
PolicyStats<Scalar> to_policy_stats(const BackwardPass<Scalar>& pass,
                                    std::span<const StepStatistics<Scalar>> steps, Scalar beta) {
  PolicyStats<Scalar> stats;
  stats.theta = pass.theta;
  stats.lambda.reserve(steps.size());
  for (const auto& step : steps) stats.lambda.push_back(step.gram().gram());
  stats.beta = beta;
  return stats;
}

// Optimistic least-squares value iteration over the full dataset with the
// logged rewards. Returns the policy statistics and V_1(s0).
template <typename Scalar>
PlanningResult<Scalar> planning(const Dataset& dataset, const FeatureMap<Scalar>& features, Scalar beta) {
  if (!(beta > Scalar(0))) throw std::invalid_argument("planning: beta must be positive");
  const auto steps = dataset_statistics(dataset, features);
  const auto pass = backward_pass<Scalar>(features, steps, beta, Objective::planning);
  const State s0 = dataset.episodes.front().steps.front().state;
  return {to_policy_stats<Scalar>(pass, steps, beta), pass.v.front()(s0)};
}

// Clipped optimistic Q_h for stored statistics, using the stored beta.
template <typename Scalar>
Mat<Scalar> policy_q_values(const PolicyStats<Scalar>& stats, const FeatureMap<Scalar>& features, int h) {
  const auto i = static_cast<std::size_t>(h);
  const Mat<Scalar>& lambda = stats.lambda.at(i);
  const Mat<Scalar> lambda_inv = lambda.ldlt().solve(Mat<Scalar>::Identity(lambda.rows(), lambda.cols()));
  const Scalar cap = static_cast<Scalar>(stats.horizon());
  const Vec<Scalar> bonus = optimism_bonus(features, lambda_inv, stats.beta, cap);
  return clipped_q(features, stats.theta.at(i), bonus, Scalar(0), cap);
}

template <typename Scalar>
Policy greedy_policy(const PolicyStats<Scalar>& stats, const FeatureMap<Scalar>& features) {
  std::vector<std::vector<Action>> table;
  table.reserve(static_cast<std::size_t>(stats.horizon()));
  for (int h = 0; h < stats.horizon(); ++h) table.push_back(argmax_rows(policy_q_values(stats, features, h)));
  return Policy(std::move(table));
}

using PolicyStatsd = PolicyStats<double>;
using PlanningResultd = PlanningResult<double>;

}  // namespace distmt
