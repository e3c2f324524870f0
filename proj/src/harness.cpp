#include "distmt/harness.hpp"

#include <atomic>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <mutex>
#include <thread>

#include "distmt/lsvi.hpp"

namespace distmt {
namespace {

void require(bool ok, const char* field) {
  if (!ok) throw std::invalid_argument(std::string("invalid config field: ") + field);
}

double checked_log(double argument, const char* what) {
  if (!(argument > 1.0))
    throw std::domain_error(std::string("log argument <= 1 in ") + what);
  return std::log(argument);
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void ExperimentConfig::validate() const {
  require(pool.dim >= 1, "dim");
  require(pool.horizon >= 1, "horizon");
  require(pool.num_tasks >= 1, "num_tasks");
  require(pool.num_states >= 1, "num_states");
  require(pool.num_actions >= 1, "num_actions");
  require(pool.c_sep > 0.0, "c_sep");
  require(pool.initial_state >= 0 && pool.initial_state < pool.num_states, "initial_state");
  require(pool.max_attempts >= 1, "max_attempts");
  require(num_agents >= 1, "num_agents");
  require(delta > 0.0 && delta < 1.0, "delta");
  require(epsilon > 0.0 && epsilon < 1.0, "epsilon");
  require(params.beta1 > 0.0, "beta1");
  require(params.beta2 > 0.0, "beta2");
  require(params.k1 >= 1, "k1");
  require(params.k2 >= 1, "k2");
  require(!rounds || *rounds >= 1, "rounds");
  require(!seeds.empty(), "seeds");
  require(parallelism >= 1, "parallelism");
}

SimulationConfig ExperimentConfig::simulation() const {
  SimulationConfig sim;
  sim.num_agents = num_agents;
  sim.delta = delta;
  sim.epsilon = epsilon;
  sim.params = params;
  sim.rounds = rounds;
  sim.parallel = parallelism > 1;
  return sim;
}

json to_json(const ExperimentConfig& c) {
  json j = {
      {"dim", c.pool.dim},
      {"horizon", c.pool.horizon},
      {"num_tasks", c.pool.num_tasks},
      {"num_states", c.pool.num_states},
      {"num_actions", c.pool.num_actions},
      {"c_sep", c.pool.c_sep},
      {"initial_state", c.pool.initial_state},
      {"max_attempts", c.pool.max_attempts},
      {"pool_seed", c.pool_seed},
      {"num_agents", c.num_agents},
      {"delta", c.delta},
      {"epsilon", c.epsilon},
      {"beta1", c.params.beta1},
      {"beta2", c.params.beta2},
      {"k1", c.params.k1},
      {"k2", c.params.k2},
      {"seeds", c.seeds},
      {"parallelism", c.parallelism},
      {"output_dir", c.output_dir},
  };
  j["rounds"] = c.rounds ? json(*c.rounds) : json(nullptr);
  return j;
}

json provenance_header(const ExperimentConfig& config) {
  json j = to_json(config);
  j.erase("output_dir");
  j.erase("parallelism");
  return j;
}

ExperimentConfig experiment_config_from_json(const json& j, ExperimentConfig c) {
  static const std::set<std::string> known = {
      "dim",      "horizon", "num_tasks", "num_states", "num_actions", "c_sep", "initial_state",
      "max_attempts", "pool_seed", "num_agents", "delta", "epsilon", "beta1", "beta2",
      "k1",       "k2",      "rounds",    "seeds",      "parallelism", "output_dir"};
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw std::invalid_argument("unknown config key: " + key);
  read_if(j, "dim", c.pool.dim);
  read_if(j, "horizon", c.pool.horizon);
  read_if(j, "num_tasks", c.pool.num_tasks);
  read_if(j, "num_states", c.pool.num_states);
  read_if(j, "num_actions", c.pool.num_actions);
  read_if(j, "c_sep", c.pool.c_sep);
  read_if(j, "initial_state", c.pool.initial_state);
  read_if(j, "max_attempts", c.pool.max_attempts);
  read_if(j, "pool_seed", c.pool_seed);
  read_if(j, "num_agents", c.num_agents);
  read_if(j, "delta", c.delta);
  read_if(j, "epsilon", c.epsilon);
  read_if(j, "beta1", c.params.beta1);
  read_if(j, "beta2", c.params.beta2);
  read_if(j, "k1", c.params.k1);
  read_if(j, "k2", c.params.k2);
  if (j.contains("rounds")) {
    if (j.at("rounds").is_null())
      c.rounds.reset();
    else
      c.rounds = j.at("rounds").get<int>();
  }
  read_if(j, "seeds", c.seeds);
  read_if(j, "parallelism", c.parallelism);
  read_if(j, "output_dir", c.output_dir);
  return c;
}

TheoryParams theoretical_params(int dim, int horizon, int num_tasks, int num_agents, double delta, double epsilon,
                                double c_sep, const TheoryConstants& k) {
  if (dim < 1 || horizon < 1 || num_tasks < 1 || num_agents < 1)
    throw std::invalid_argument("theoretical_params: counts must be positive");
  if (!(delta > 0.0) || !(epsilon > 0.0) || !(c_sep > 0.0) || !(k.c_beta1 > 0.0) || !(k.c_k1 > 0.0) ||
      !(k.c_beta2 > 0.0) || !(k.c_k2 > 0.0))
    throw std::invalid_argument("theoretical_params: constants must be positive");
  const double d = dim;
  const double h = horizon;
  const double m = num_tasks;
  const double log_sep = checked_log(d * h * m / (delta * c_sep), "dHM/(delta c_sep)");
  const double log_eps = checked_log(d * h * m / (delta * epsilon), "dHM/(delta epsilon)");
  const double log_rounds = checked_log(m / delta, "M/delta");
  const double poly = d * d * d * std::pow(h, 6);

  TheoryParams out;
  out.beta1 = k.c_beta1 * h * d * std::sqrt(log_sep);
  out.k1 = k.c_k1 * poly * log_sep / (c_sep * c_sep);
  out.beta2 = k.c_beta2 * h * d * std::sqrt(log_eps);
  out.k2 = k.c_k2 * poly * log_sep / (epsilon * epsilon);
  out.rounds = 6.0 * m * log_rounds / num_agents;
  return out;
}

std::pair<int, int> hardest_pair(const TaskPool& pool) {
  if (pool.size() == 1) return {1, 1};
  std::pair<int, int> best{1, 2};
  double gap = std::numeric_limits<double>::infinity();
  for (int i = 0; i < pool.size(); ++i)
    for (int j = i + 1; j < pool.size(); ++j) {
      const double g = std::abs(pool.optimal_values[static_cast<std::size_t>(i)] -
                                pool.optimal_values[static_cast<std::size_t>(j)]);
      if (g < gap) {
        gap = g;
        best = {i + 1, j + 1};
      }
    }
  return best;
}

CalibrationResult calibrate_k(const TaskPool& pool, double beta, double target, int budget, std::uint64_t seed) {
  if (!(beta > 0.0) || !(target > 0.0) || budget < 1)
    throw std::invalid_argument("calibrate_k: beta, target and budget must be positive");
  const auto [first, second] = hardest_pair(pool);
  const FeatureMapd& features = *pool.features;

  CalibrationResult best;
  for (int k = 1; k <= budget; k *= 2) {
    int hits = 0;
    for (int trial = 0; trial < kCalibrationTrials; ++trial) {
      const int label = trial % 2 == 0 ? first : second;
      const LinearTaskd& task = pool.task(label);
      Rng rng = make_stream(seed, {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(trial)});
      const Dataset data = exp_ph(Environmentd(task), features, beta, k, rng);
      const double v1 = planning(data, features, beta).v1;
      if (std::abs(v1 - pool.optimal_values[static_cast<std::size_t>(label - 1)]) <= target) ++hits;
    }
    const double rate = static_cast<double>(hits) / kCalibrationTrials;
    best.history.emplace_back(k, rate);
    if (rate > best.rate || best.k == 0) {
      best.k = k;
      best.rate = rate;
    }
    if (rate >= kCalibrationRate) {
      best.k = k;
      best.rate = rate;
      return best;
    }
    if (k > budget / 2) break;
  }
  std::ostringstream msg;
  msg << "calibration budget " << budget << " exhausted; best K = " << best.k << " with rate " << best.rate;
  throw CalibrationError(msg.str(), best);
}

double SweepReport::mean_learn_episodes(int num_agents) const {
  double sum = 0.0;
  int count = 0;
  for (const auto& row : rows)
    if (row.num_agents == num_agents) {
      sum += row.mean_learn_episodes_per_agent;
      ++count;
    }
  return count ? sum / count : 0.0;
}

SweepReport sweep_agents(const TaskPool& pool, const ExperimentConfig& config, const std::vector<int>& n_values,
                         const std::vector<std::uint64_t>& seeds) {
  struct Cell {
    int n;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (int n : n_values)
    for (auto s : seeds) cells.push_back({n, s});

  SweepReport report;
  report.rows.resize(cells.size());
  auto run_cell = [&](std::size_t i) {
    ExperimentConfig cell_config = config;
    cell_config.num_agents = cells[i].n;
    SimulationConfig sim = cell_config.simulation();
    sim.parallel = false;  // cells are the unit of parallelism
    const SimulationReport r = run_simulation(pool, sim, cells[i].seed);
    report.rows[i] = {cells[i].n,
                      cells[i].seed,
                      r.mean_episodes_per_agent(),
                      r.mean_gap(),
                      r.duplicate_solves,
                      r.anomalies.total(),
                      r.mean_learn_episodes_per_agent(),
                      r.misgroupings(),
                      r.bound_violations(),
                      r.eps_failures(false)};
  };

  const auto workers = static_cast<std::size_t>(std::max(1, config.parallelism));
  if (workers == 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) run_cell(i);
    return report;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < cells.size(); i = next++) {
        try {
          run_cell(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  threads.clear();
  if (failure) std::rethrow_exception(failure);
  return report;
}

void write_sweep_csv(std::ostream& out, const SweepReport& report, const json& config_header) {
  out << "# distmt sweep\n";
  out << "# config: " << config_header.dump() << "\n";
  out << kSweepCsvColumns << "\n";
  for (const auto& r : report.rows) {
    out << r.num_agents << ',' << r.seed << ',' << format_real(r.mean_episodes_per_agent) << ','
        << format_real(r.mean_gap) << ',' << r.duplicate_solves << ',' << r.anomalies << ','
        << format_real(r.mean_learn_episodes_per_agent) << ',' << r.misgroupings << ',' << r.bound_violations
        << ',' << r.eps_failures << '\n';
  }
}

SweepReport read_sweep_csv(std::istream& in) {
  SweepReport report;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      if (line != kSweepCsvColumns) throw std::invalid_argument("unexpected sweep CSV header: " + line);
      header_seen = true;
      continue;
    }
    std::istringstream fields(line);
    std::vector<std::string> c;
    std::string cell;
    while (std::getline(fields, cell, ',')) c.push_back(cell);
    if (c.size() != 10) throw std::invalid_argument("sweep CSV row has wrong arity: " + line);
    report.rows.push_back({std::stoi(c[0]), std::stoull(c[1]), std::stod(c[2]), std::stod(c[3]), std::stoi(c[4]),
                           std::stol(c[5]), std::stod(c[6]), std::stoi(c[7]), std::stoi(c[8]), std::stoi(c[9])});
  }
  return report;
}

}  // namespace distmt
