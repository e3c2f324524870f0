#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>
#include <utility>

#include "distmt/core.hpp"

namespace distmt {

inline constexpr double kStochasticTolerance = 1e-9;
inline constexpr double kNegativeClamp = 1e-12;

// Known embedding phi(s, a) in R^d, stored column-wise: column s * A + a.
template <typename Scalar>
class FeatureMap {
 public:
  FeatureMap(int num_states, int num_actions, Mat<Scalar> phi)
      : num_states_(num_states), num_actions_(num_actions), phi_(std::move(phi)) {
    if (num_states < 1 || num_actions < 1 || phi_.rows() < 1)
      throw std::invalid_argument("feature map needs at least one state, action and dimension");
    if (phi_.cols() != static_cast<Eigen::Index>(num_states) * num_actions)
      throw std::invalid_argument("feature matrix must have num_states * num_actions columns");
    if (!phi_.allFinite()) throw std::invalid_argument("feature matrix has non-finite entries");
    for (Eigen::Index c = 0; c < phi_.cols(); ++c) {
      if (phi_.col(c).norm() > Scalar(1) + Scalar(kStochasticTolerance)) {
        std::ostringstream msg;
        msg << "feature norm " << phi_.col(c).norm() << " exceeds 1 at column " << c;
        throw std::invalid_argument(msg.str());
      }
    }
  }

  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }
  int dim() const { return static_cast<int>(phi_.rows()); }

  Eigen::Index index(State s, Action a) const {
    if (s < 0 || s >= num_states_ || a < 0 || a >= num_actions_)
      throw std::out_of_range("state/action index out of range");
    return static_cast<Eigen::Index>(s) * num_actions_ + a;
  }

  auto operator()(State s, Action a) const { return phi_.col(index(s, a)); }

  // d x (S*A) matrix of all features.
  const Mat<Scalar>& matrix() const { return phi_; }

 private:
  int num_states_;
  int num_actions_;
  Mat<Scalar> phi_;
};

// One finite-horizon linear MDP. mu[h] is |S| x d with row s' = mu_h(s'),
// eta[h] is the reward parameter. Steps are 0-based internally.
template <typename Scalar>
class LinearTask {
 public:
  LinearTask(std::shared_ptr<const FeatureMap<Scalar>> features, std::vector<Mat<Scalar>> mu,
             std::vector<Vec<Scalar>> eta, State initial_state = 0, int label = 0)
      : features_(std::move(features)),
        mu_(std::move(mu)),
        eta_(std::move(eta)),
        initial_state_(initial_state),
        label_(label) {
    if (!features_) throw std::invalid_argument("task needs a feature map");
    if (mu_.empty() || mu_.size() != eta_.size())
      throw std::invalid_argument("mu and eta must have one entry per step");
    if (initial_state_ < 0 || initial_state_ >= features_->num_states())
      throw std::out_of_range("initial state out of range");
    build_tables();
  }

  int horizon() const { return static_cast<int>(mu_.size()); }
  int num_states() const { return features_->num_states(); }
  int num_actions() const { return features_->num_actions(); }
  int dim() const { return features_->dim(); }
  State initial_state() const { return initial_state_; }
  int label() const { return label_; }

  const FeatureMap<Scalar>& features() const { return *features_; }
  const std::shared_ptr<const FeatureMap<Scalar>>& shared_features() const { return features_; }
  const Mat<Scalar>& mu(int h) const { return mu_.at(static_cast<std::size_t>(h)); }
  const Vec<Scalar>& eta(int h) const { return eta_.at(static_cast<std::size_t>(h)); }

  // P_h(. | s, a) as a row-major table: row s*A + a, column s'.
  const Mat<Scalar>& transition_table(int h) const {
    check_step(h);
    return transitions_[static_cast<std::size_t>(h)];
  }
  // r_h(s, a) indexed by s*A + a.
  const Vec<Scalar>& reward_table(int h) const {
    check_step(h);
    return rewards_[static_cast<std::size_t>(h)];
  }

  Scalar reward(int h, State s, Action a) const {
    return reward_table(h)(features_->index(s, a));
  }

 private:
  void check_step(int h) const {
    if (h < 0 || h >= horizon()) throw std::out_of_range("step index out of range");
  }

  void build_tables() {
    const int d = features_->dim();
    const Scalar sqrt_d = std::sqrt(Scalar(d));
    const Scalar tol = Scalar(kStochasticTolerance);
    const Mat<Scalar>& phi = features_->matrix();
    transitions_.reserve(mu_.size());
    rewards_.reserve(mu_.size());
    for (std::size_t h = 0; h < mu_.size(); ++h) {
      const Mat<Scalar>& mu = mu_[h];
      const Vec<Scalar>& eta = eta_[h];
      if (mu.rows() != features_->num_states() || mu.cols() != d || eta.size() != d)
        throw std::invalid_argument("mu/eta shape does not match the feature map");
      for (Eigen::Index s = 0; s < mu.rows(); ++s)
        if (mu.row(s).norm() > sqrt_d + tol)
          throw std::invalid_argument("||mu_h(s')|| exceeds sqrt(d)");
      if (eta.norm() > sqrt_d + tol) throw std::invalid_argument("||eta_h|| exceeds sqrt(d)");

      Mat<Scalar> p = (mu * phi).transpose();
      for (Eigen::Index row = 0; row < p.rows(); ++row) {
        for (Eigen::Index c = 0; c < p.cols(); ++c) {
          if (p(row, c) < -Scalar(kNegativeClamp)) {
            std::ostringstream msg;
            msg << "negative transition probability " << p(row, c) << " at step " << h;
            throw std::invalid_argument(msg.str());
          }
          if (p(row, c) < Scalar(0)) p(row, c) = Scalar(0);
        }
        if (std::abs(p.row(row).sum() - Scalar(1)) > tol)
          throw std::invalid_argument("transition probabilities do not sum to one");
      }
      Vec<Scalar> r = phi.transpose() * eta;
      for (Eigen::Index i = 0; i < r.size(); ++i) {
        if (r(i) < -tol || r(i) > Scalar(1) + tol)
          throw std::invalid_argument("reward outside [0, 1]");
        r(i) = std::clamp(r(i), Scalar(0), Scalar(1));
      }
      transitions_.push_back(std::move(p));
      rewards_.push_back(std::move(r));
    }
  }

  std::shared_ptr<const FeatureMap<Scalar>> features_;
  std::vector<Mat<Scalar>> mu_;
  std::vector<Vec<Scalar>> eta_;
  State initial_state_;
  int label_;
  std::vector<Mat<Scalar>> transitions_;
  std::vector<Vec<Scalar>> rewards_;
};

// <mu_h(s'), phi(s, a)> over s'. Recomputed from the parameters, not the cache.
template <typename Scalar>
Vec<Scalar> transition_probs(const LinearTask<Scalar>& task, int h, State s, Action a) {
  if (h < 0 || h >= task.horizon()) throw std::out_of_range("step index out of range");
  Vec<Scalar> p = task.mu(h) * task.features()(s, a);
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p(i) < Scalar(0) && p(i) >= -Scalar(kNegativeClamp)) p(i) = Scalar(0);
  return p;
}

namespace detail {

template <typename Scalar>
State draw_next_state(const Mat<Scalar>& table, Eigen::Index row, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double cumulative = 0.0;
  const Eigen::Index n = table.cols();
  for (Eigen::Index c = 0; c < n; ++c) {
    cumulative += static_cast<double>(table(row, c));
    if (u < cumulative) return static_cast<State>(c);
  }
  // Round-off: fall back to the last state with positive mass.
  for (Eigen::Index c = n - 1; c >= 0; --c)
    if (table(row, c) > Scalar(0)) return static_cast<State>(c);
  return static_cast<State>(n - 1);
}

}  // namespace detail

// Runs one episode from the initial state. Rewards are deterministic.
template <typename Scalar>
EpisodeRecord sample_episode(const LinearTask<Scalar>& task, const Policy& policy, Rng& rng) {
  if (policy.horizon() != task.horizon() || policy.num_states() != task.num_states())
    throw std::invalid_argument("policy shape does not match task");
  EpisodeRecord record;
  record.steps.reserve(static_cast<std::size_t>(task.horizon()));
  const auto& features = task.features();
  State s = task.initial_state();
  for (int h = 0; h < task.horizon(); ++h) {
    const Action a = policy(h, s);
    const Eigen::Index idx = features.index(s, a);
    record.steps.push_back({s, a, static_cast<double>(task.reward_table(h)(idx))});
    if (h + 1 < task.horizon()) s = detail::draw_next_state(task.transition_table(h), idx, rng);
  }
  return record;
}

// Agent-facing environment: can only be sampled. Task parameters and the
// hidden label are not reachable through this handle.
template <typename Scalar>
class Environment {
 public:
  explicit Environment(const LinearTask<Scalar>& task) : task_(&task) {}

  EpisodeRecord run_episode(const Policy& policy, Rng& rng) const {
    return sample_episode(*task_, policy, rng);
  }
  int horizon() const { return task_->horizon(); }
  State initial_state() const { return task_->initial_state(); }

 private:
  const LinearTask<Scalar>* task_;
};

using FeatureMapd = FeatureMap<double>;
using LinearTaskd = LinearTask<double>;
using Environmentd = Environment<double>;

}  // namespace distmt
