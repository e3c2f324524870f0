#include "distmt/task_pool.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace distmt {
namespace {

constexpr double kFeatureConcentration = 0.3;
constexpr double kMeasureConcentration = 0.5;
constexpr double kRewardSpread = 1.0;
constexpr double kValueTolerance = 1e-9;

Vec<double> dirichlet(int n, double alpha, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  Vec<double> x(n);
  for (int i = 0; i < n; ++i) x(i) = gamma(rng);
  const double total = x.sum();
  if (!(total > 0.0)) {
    x.setConstant(1.0 / n);
    return x;
  }
  return x / total;
}

}  // namespace

double TaskPool::min_separation() const {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < optimal_values.size(); ++i)
    for (std::size_t j = i + 1; j < optimal_values.size(); ++j)
      best = std::min(best, std::abs(optimal_values[i] - optimal_values[j]));
  return best;
}

std::shared_ptr<const FeatureMapd> random_feature_map(int num_states, int num_actions, int dim, Rng& rng) {
  if (num_states < 1 || num_actions < 1 || dim < 1)
    throw std::invalid_argument("feature map sizes must be positive");
  Mat<double> phi(dim, num_states * num_actions);
  for (Eigen::Index c = 0; c < phi.cols(); ++c) phi.col(c) = dirichlet(dim, kFeatureConcentration, rng);
  return std::make_shared<const FeatureMapd>(num_states, num_actions, std::move(phi));
}

LinearTaskd random_linear_task(std::shared_ptr<const FeatureMapd> features, int horizon, State initial_state,
                               int label, double reward_level, Rng& rng) {
  if (horizon < 1) throw std::invalid_argument("horizon must be positive");
  const int d = features->dim();
  const int num_states = features->num_states();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Mat<double>> mu;
  std::vector<Vec<double>> eta;
  for (int h = 0; h < horizon; ++h) {
    // Column j is the j-th latent next-state distribution, so each row of
    // (mu * phi)^T is a convex combination of distributions.
    Mat<double> m(num_states, d);
    for (int j = 0; j < d; ++j) m.col(j) = dirichlet(num_states, kMeasureConcentration, rng);
    Vec<double> e(d);
    for (int j = 0; j < d; ++j)
      e(j) = std::clamp(reward_level + kRewardSpread * (unif(rng) - 0.5), 0.0, 1.0);
    mu.push_back(std::move(m));
    eta.push_back(std::move(e));
  }
  return LinearTaskd(std::move(features), std::move(mu), std::move(eta), initial_state, label);
}

TaskPool generate_task_pool(const PoolConfig& config, Rng& rng) {
  if (config.num_tasks < 1 || config.horizon < 1 || config.max_attempts < 1)
    throw std::invalid_argument("pool config counts must be positive");
  if (!(config.c_sep > 0.0)) throw std::invalid_argument("c_sep must be positive");
  // Values live in [0, H], so M values more than c_sep apart need (M-1) c_sep < H.
  if (static_cast<double>(config.num_tasks - 1) * config.c_sep >= static_cast<double>(config.horizon)) {
    std::ostringstream msg;
    msg << "separation " << config.c_sep << " is infeasible for " << config.num_tasks
        << " tasks with values in [0, " << config.horizon << "]";
    throw ConstructionError(msg.str(), {});
  }

  TaskPool pool;
  pool.features = random_feature_map(config.num_states, config.num_actions, config.dim, rng);
  pool.c_sep = config.c_sep;
  pool.initial_state = config.initial_state;

  std::uniform_real_distribution<double> level(0.0, 1.0);
  for (int attempt = 0; attempt < config.max_attempts && pool.size() < config.num_tasks; ++attempt) {
    LinearTaskd candidate = random_linear_task(pool.features, config.horizon, config.initial_state,
                                               pool.size() + 1, level(rng), rng);
    const double value = optimal_value(candidate);
    const bool separated = std::all_of(pool.optimal_values.begin(), pool.optimal_values.end(),
                                       [&](double v) { return std::abs(v - value) > config.c_sep; });
    if (!separated) continue;
    pool.tasks.push_back(std::move(candidate));
    pool.optimal_values.push_back(value);
  }
  if (pool.size() < config.num_tasks) {
    std::ostringstream msg;
    msg << "could only place " << pool.size() << " of " << config.num_tasks << " tasks with separation > "
        << config.c_sep << " after " << config.max_attempts << " attempts";
    throw ConstructionError(msg.str(), pool.optimal_values);
  }
  return pool;
}

json to_json(const TaskPool& pool) {
  const auto& f = *pool.features;
  json tasks = json::array();
  for (const auto& task : pool.tasks) {
    json mu = json::array();
    json eta = json::array();
    for (int h = 0; h < task.horizon(); ++h) {
      mu.push_back(to_json(task.mu(h)));
      eta.push_back(to_json(task.eta(h)));
    }
    tasks.push_back({{"label", task.label()}, {"mu", std::move(mu)}, {"eta", std::move(eta)}});
  }
  return {
      {"dims",
       {{"num_states", f.num_states()},
        {"num_actions", f.num_actions()},
        {"dim", f.dim()},
        {"horizon", pool.horizon()},
        {"num_tasks", pool.size()}}},
      {"phi", to_json(f.matrix())},
      {"tasks", std::move(tasks)},
      {"c_sep", pool.c_sep},
      {"initial_state", pool.initial_state},
      {"optimal_values", pool.optimal_values},
  };
}

TaskPool pool_from_json(const json& j) {
  const json& dims = j.at("dims");
  TaskPool pool;
  pool.features = std::make_shared<const FeatureMapd>(dims.at("num_states").get<int>(),
                                                      dims.at("num_actions").get<int>(),
                                                      matrix_from_json(j.at("phi")));
  pool.c_sep = j.at("c_sep").get<double>();
  pool.initial_state = j.at("initial_state").get<State>();
  for (const auto& t : j.at("tasks")) {
    std::vector<Mat<double>> mu;
    std::vector<Vec<double>> eta;
    for (const auto& m : t.at("mu")) mu.push_back(matrix_from_json(m));
    for (const auto& e : t.at("eta")) eta.push_back(vector_from_json(e));
    pool.tasks.emplace_back(pool.features, std::move(mu), std::move(eta), pool.initial_state,
                            t.at("label").get<int>());
  }
  if (pool.tasks.empty()) throw std::invalid_argument("pool has no tasks");
  for (const auto& task : pool.tasks) pool.optimal_values.push_back(optimal_value(task));
  const auto stored = j.at("optimal_values").get<std::vector<double>>();
  if (stored.size() != pool.optimal_values.size())
    throw std::invalid_argument("optimal_values length does not match tasks");
  for (std::size_t i = 0; i < stored.size(); ++i)
    if (std::abs(stored[i] - pool.optimal_values[i]) > kValueTolerance)
      throw std::invalid_argument("stored optimal value disagrees with the oracle");
  if (pool.size() > 1 && !(pool.min_separation() > pool.c_sep))
    throw std::invalid_argument("pool violates its separation constant");
  return pool;
}

}  // namespace distmt
