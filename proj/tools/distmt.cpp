// distmt: command-line runner for the distributed multi-task LSVI simulator.
//
//   distmt gen-pool   [config flags] [--out pool.json]
//   distmt run        [config flags] [--pool pool.json] [--seed S]
//   distmt sweep      [config flags] [--n-values 1,2,3,6]
//   distmt calibrate  [config flags] --target sep|eps|<value> [--beta B] [--budget K]
//   distmt theory     [config flags] [--c-beta1 ..] [--c-k1 ..] [--c-beta2 ..] [--c-k2 ..]
//
// Errors go to stderr as one JSON object; the exit code is nonzero.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "distmt/harness.hpp"

namespace fs = std::filesystem;
using namespace distmt;

namespace {

struct Overrides {
  std::optional<std::string> config_file;
  std::optional<int> dim, horizon, num_tasks, num_states, num_actions, initial_state, max_attempts;
  std::optional<double> c_sep, delta, epsilon, beta1, beta2;
  std::optional<std::uint64_t> pool_seed;
  std::optional<int> num_agents, k1, k2, rounds, parallelism;
  std::vector<std::uint64_t> seeds;
  std::optional<std::string> output_dir;
};

void add_config_options(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config_file, "JSON config file; flags override it")->check(CLI::ExistingFile);
  app->add_option("--dim", o.dim, "feature dimension d");
  app->add_option("--horizon", o.horizon, "episode length H");
  app->add_option("--num-tasks", o.num_tasks, "number of tasks M");
  app->add_option("--num-states", o.num_states, "|S|");
  app->add_option("--num-actions", o.num_actions, "|A|");
  app->add_option("--c-sep", o.c_sep, "task separation constant");
  app->add_option("--initial-state", o.initial_state, "s0");
  app->add_option("--max-attempts", o.max_attempts, "pool construction attempts");
  app->add_option("--pool-seed", o.pool_seed, "seed for pool generation");
  app->add_option("--num-agents", o.num_agents, "number of agents N");
  app->add_option("--delta", o.delta, "failure probability");
  app->add_option("--epsilon", o.epsilon, "target accuracy");
  app->add_option("--beta1", o.beta1, "probe-phase bonus scale");
  app->add_option("--beta2", o.beta2, "learning-phase bonus scale");
  app->add_option("--k1", o.k1, "probe-phase episodes");
  app->add_option("--k2", o.k2, "learning-phase episodes");
  app->add_option("--rounds", o.rounds, "override the number of rounds T");
  app->add_option("--seeds", o.seeds, "master seeds")->delimiter(',');
  app->add_option("--parallelism", o.parallelism, "worker threads");
  app->add_option("--output-dir", o.output_dir, "directory for CSV/JSON outputs");
}

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig c;
  if (o.config_file) {
    std::ifstream in(*o.config_file);
    c = experiment_config_from_json(json::parse(in));
  }
  auto set = [](auto& field, const auto& value) {
    if (value) field = *value;
  };
  set(c.pool.dim, o.dim);
  set(c.pool.horizon, o.horizon);
  set(c.pool.num_tasks, o.num_tasks);
  set(c.pool.num_states, o.num_states);
  set(c.pool.num_actions, o.num_actions);
  set(c.pool.c_sep, o.c_sep);
  set(c.pool.initial_state, o.initial_state);
  set(c.pool.max_attempts, o.max_attempts);
  set(c.pool_seed, o.pool_seed);
  set(c.num_agents, o.num_agents);
  set(c.delta, o.delta);
  set(c.epsilon, o.epsilon);
  set(c.params.beta1, o.beta1);
  set(c.params.beta2, o.beta2);
  set(c.params.k1, o.k1);
  set(c.params.k2, o.k2);
  if (o.rounds) c.rounds = *o.rounds;
  set(c.parallelism, o.parallelism);
  set(c.output_dir, o.output_dir);
  if (!o.seeds.empty()) c.seeds = o.seeds;
  c.validate();
  return c;
}

TaskPool load_or_generate_pool(const ExperimentConfig& c, const std::optional<std::string>& pool_file) {
  if (pool_file) {
    std::ifstream in(*pool_file);
    if (!in) throw std::runtime_error("cannot open pool file " + *pool_file);
    return pool_from_json(json::parse(in));
  }
  Rng rng(c.pool_seed);
  return generate_task_pool(c.pool, rng);
}

std::ofstream open_output(const ExperimentConfig& c, const std::string& name) {
  fs::create_directories(c.output_dir);
  std::ofstream out(fs::path(c.output_dir) / name, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (fs::path(c.output_dir) / name).string());
  return out;
}

int report_error(const char* kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << std::endl;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed multi-task least-squares value iteration on synthetic linear MDPs"};
  app.require_subcommand(1);

  Overrides gen_o, run_o, sweep_o, cal_o, theory_o;
  std::optional<std::string> gen_out, run_pool, sweep_pool, cal_pool;
  std::optional<std::uint64_t> run_seed;
  std::vector<int> n_values{1, 2, 3, 6};
  std::string target = "eps";
  std::optional<double> cal_beta;
  int budget = 1 << 16;
  TheoryConstants constants;

  auto* gen = app.add_subcommand("gen-pool", "generate a separated task pool as JSON");
  add_config_options(gen, gen_o);
  gen->add_option("--out", gen_out, "output file (default: stdout)");

  auto* run = app.add_subcommand("run", "run one simulation; writes run.csv and summary.json");
  add_config_options(run, run_o);
  run->add_option("--pool", run_pool, "pool JSON (default: generate from --pool-seed)");
  run->add_option("--seed", run_seed, "master seed (default: first of --seeds)");

  auto* sweep = app.add_subcommand("sweep", "sweep the number of agents; writes sweep.csv");
  add_config_options(sweep, sweep_o);
  sweep->add_option("--pool", sweep_pool, "pool JSON (default: generate from --pool-seed)");
  sweep->add_option("--n-values", n_values, "agent counts")->delimiter(',');

  auto* cal = app.add_subcommand("calibrate", "doubling search for the episode count K");
  add_config_options(cal, cal_o);
  cal->add_option("--pool", cal_pool, "pool JSON (default: generate from --pool-seed)");
  cal->add_option("--target", target, "sep (c_sep/8), eps (epsilon) or a number");
  cal->add_option("--beta", cal_beta, "bonus scale (default: beta1 for sep, beta2 otherwise)");
  cal->add_option("--budget", budget, "largest K to try");

  auto* theory = app.add_subcommand("theory", "print the theoretical beta, K and T values");
  add_config_options(theory, theory_o);
  theory->add_option("--c-beta1", constants.c_beta1, "constant in front of beta1");
  theory->add_option("--c-k1", constants.c_k1, "constant in front of K1");
  theory->add_option("--c-beta2", constants.c_beta2, "constant in front of beta2");
  theory->add_option("--c-k2", constants.c_k2, "constant in front of K2");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", "usage"}, {"message", e.what()}}.dump() << std::endl;
    return 2;
  }

  try {
    if (*gen) {
      const ExperimentConfig c = resolve(gen_o);
      const json pool = to_json(load_or_generate_pool(c, std::nullopt));
      if (gen_out) {
        std::ofstream out(*gen_out);
        out << pool.dump(2) << "\n";
      } else {
        std::cout << pool.dump(2) << "\n";
      }
    } else if (*run) {
      const ExperimentConfig c = resolve(run_o);
      const TaskPool pool = load_or_generate_pool(c, run_pool);
      const std::uint64_t seed = run_seed ? *run_seed : c.seeds.front();
      const SimulationReport report = run_simulation(pool, c.simulation(), seed);
      auto csv = open_output(c, "run.csv");
      write_run_csv(csv, report, provenance_header(c));
      json summary = summary_json(report);
      summary["config"] = provenance_header(c);
      auto out = open_output(c, "summary.json");
      out << summary.dump(2) << "\n";
      std::cout << json{{"bound_violations", report.bound_violations()},
                        {"misgroupings", report.misgroupings()},
                        {"mean_gap", report.mean_gap()},
                        {"mean_episodes_per_agent", report.mean_episodes_per_agent()}}
                       .dump()
                << std::endl;
    } else if (*sweep) {
      const ExperimentConfig c = resolve(sweep_o);
      const TaskPool pool = load_or_generate_pool(c, sweep_pool);
      const SweepReport report = sweep_agents(pool, c, n_values, c.seeds);
      json header = provenance_header(c);
      header["n_values"] = n_values;
      auto csv = open_output(c, "sweep.csv");
      write_sweep_csv(csv, report, header);
      json means = json::object();
      for (int n : n_values) means[std::to_string(n)] = report.mean_learn_episodes(n);
      std::cout << json{{"mean_learn_episodes_per_agent", means}}.dump() << std::endl;
    } else if (*cal) {
      const ExperimentConfig c = resolve(cal_o);
      const TaskPool pool = load_or_generate_pool(c, cal_pool);
      double goal = 0.0;
      double beta = c.params.beta2;
      if (target == "sep") {
        goal = c.pool.c_sep / 8.0;
        beta = c.params.beta1;
      } else if (target == "eps") {
        goal = c.epsilon;
      } else {
        goal = std::stod(target);
      }
      if (cal_beta) beta = *cal_beta;
      const std::uint64_t seed = c.seeds.front();
      json out = {{"target", goal}, {"beta", beta}, {"seed", seed}, {"config", provenance_header(c)}};
      try {
        const CalibrationResult r = calibrate_k(pool, beta, goal, budget, seed);
        out["k"] = r.k;
        out["rate"] = r.rate;
        out["history"] = r.history;
        std::cout << out.dump(2) << std::endl;
      } catch (const CalibrationError& e) {
        return report_error("calibration", std::string(e.what()) + "; history " + json(e.best().history).dump());
      }
    } else if (*theory) {
      const ExperimentConfig c = resolve(theory_o);
      const TheoryParams t = theoretical_params(c.pool.dim, c.pool.horizon, c.pool.num_tasks, c.num_agents, c.delta,
                                                c.epsilon, c.pool.c_sep, constants);
      std::cout << json{{"beta1", t.beta1}, {"k1", t.k1}, {"beta2", t.beta2}, {"k2", t.k2}, {"rounds", t.rounds}}
                       .dump(2)
                << std::endl;
    }
  } catch (const ConstructionError& e) {
    return report_error("construction", e.what());
  } catch (const ProtocolError& e) {
    return report_error("protocol", e.what());
  } catch (const NumericError& e) {
    return report_error("numeric", e.what());
  } catch (const std::domain_error& e) {
    return report_error("domain", e.what());
  } catch (const std::invalid_argument& e) {
    return report_error("invalid_argument", e.what());
  } catch (const std::exception& e) {
    return report_error("runtime", e.what());
  }
  return 0;
}
