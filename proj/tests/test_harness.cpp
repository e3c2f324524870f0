#include <doctest.h>

#include <fstream>
#include <sstream>

#include "distmt/dp_oracle.hpp"
#include "distmt/harness.hpp"
#include "support.hpp"

using namespace distmt;
using namespace distmt::testing;

namespace {

TaskPool standard_pool(const ExperimentConfig& config = {}) {
  Rng rng(config.pool_seed);
  return generate_task_pool(config.pool, rng);
}

json baseline() {
  std::ifstream in(DISTMT_SOURCE_DIR "/data/calibration_baseline.json");
  REQUIRE(in.good());
  return json::parse(in);
}

}  // namespace

TEST_CASE("config validation") {
  ExperimentConfig c;
  CHECK_NOTHROW(c.validate());
  auto rejects = [](auto mutate) {
    ExperimentConfig bad;
    mutate(bad);
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  };
  rejects([](ExperimentConfig& x) { x.delta = 1.0; });
  rejects([](ExperimentConfig& x) { x.delta = 0.0; });
  rejects([](ExperimentConfig& x) { x.epsilon = 1.5; });
  rejects([](ExperimentConfig& x) { x.pool.c_sep = 0.0; });
  rejects([](ExperimentConfig& x) { x.pool.num_states = 0; });
  rejects([](ExperimentConfig& x) { x.num_agents = 0; });
  rejects([](ExperimentConfig& x) { x.params.k1 = 0; });
  rejects([](ExperimentConfig& x) { x.params.beta2 = -1.0; });
  rejects([](ExperimentConfig& x) { x.seeds.clear(); });
  rejects([](ExperimentConfig& x) { x.rounds = 0; });
  ExperimentConfig independent;
  independent.params.beta1 = 2.0;
  independent.params.beta2 = 0.1;
  CHECK_NOTHROW(independent.validate());
}

TEST_CASE("config JSON") {
  ExperimentConfig c;
  c.num_agents = 5;
  c.rounds = 9;
  c.seeds = {3, 4};
  c.params.k2 = 64;
  c.output_dir = "out";
  const ExperimentConfig back = experiment_config_from_json(json::parse(to_json(c).dump()));
  CHECK(to_json(back) == to_json(c));
  CHECK(back.rounds == 9);

  const ExperimentConfig partial = experiment_config_from_json(json{{"num_agents", 2}});
  CHECK(partial.num_agents == 2);
  CHECK(partial.params.k1 == ExperimentConfig{}.params.k1);
  CHECK_THROWS_AS(experiment_config_from_json(json{{"num_agent", 2}}), std::invalid_argument);

  const json header = provenance_header(c);
  CHECK_FALSE(header.contains("output_dir"));
  CHECK_FALSE(header.contains("parallelism"));
  CHECK(header.at("seeds") == json::array({3, 4}));
}

TEST_CASE("theoretical parameters") {
  SUBCASE("unit constants with the log term equal to one") {
    const double delta = 0.5;
    const double c_sep = 1.0 / (std::exp(1.0) * delta);
    const TheoryParams t = theoretical_params(1, 1, 1, 1, delta, 0.25, c_sep);
    CHECK(t.k1 == doctest::Approx(1.0 / (c_sep * c_sep)).epsilon(1e-12));
    CHECK(t.beta1 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(t.rounds == doctest::Approx(6.0 * std::log(1.0 / delta)).epsilon(1e-12));
  }
  SUBCASE("K2 scales as 1/eps^2") {
    const TheoryParams a = theoretical_params(3, 4, 6, 2, 0.1, 0.5, 0.5);
    const TheoryParams b = theoretical_params(3, 4, 6, 2, 0.1, 0.25, 0.5);
    CHECK(b.k2 == doctest::Approx(4.0 * a.k2).epsilon(1e-12));
    CHECK(b.k1 == a.k1);
  }
  SUBCASE("standard setting recomputed by hand") {
    const TheoryConstants k{.c_beta1 = 1.0, .c_k1 = 1.0, .c_beta2 = 1.0, .c_k2 = 1.0};
    const TheoryParams t = theoretical_params(3, 4, 6, 1, 0.1, 0.5, 0.5, k);
    const double log_sep = std::log(3.0 * 4 * 6 / (0.1 * 0.5));  // ln 1440
    const double log_eps = std::log(3.0 * 4 * 6 / (0.1 * 0.5));
    const double poly = 27.0 * 4096.0;
    CHECK(t.beta1 == doctest::Approx(12.0 * std::sqrt(log_sep)).epsilon(1e-14));
    CHECK(t.k1 == doctest::Approx(poly * log_sep / 0.25).epsilon(1e-14));
    CHECK(t.beta2 == doctest::Approx(12.0 * std::sqrt(log_eps)).epsilon(1e-14));
    CHECK(t.k2 == doctest::Approx(poly * log_sep / 0.25).epsilon(1e-14));
    CHECK(t.rounds == doctest::Approx(36.0 * std::log(60.0)).epsilon(1e-14));
    const TheoryParams scaled = theoretical_params(3, 4, 6, 1, 0.1, 0.5, 0.5, {2.0, 3.0, 5.0, 7.0});
    CHECK(scaled.beta1 == doctest::Approx(2.0 * t.beta1));
    CHECK(scaled.k1 == doctest::Approx(3.0 * t.k1));
    CHECK(scaled.beta2 == doctest::Approx(5.0 * t.beta2));
    CHECK(scaled.k2 == doctest::Approx(7.0 * t.k2));
  }
  SUBCASE("log argument at most one") {
    CHECK_THROWS_AS(theoretical_params(1, 1, 1, 1, 0.9, 0.5, 2.0), std::domain_error);
    CHECK_THROWS_AS(theoretical_params(1, 1, 1, 1, 0.5, 2.0, 0.5), std::domain_error);
  }
}

TEST_CASE("hardest pair") {
  TaskPool pool;
  pool.optimal_values = {0.5, 2.0, 1.2, 1.9};
  pool.tasks.assign(4, random_task(1, 2, 1, 1, 1));
  CHECK(hardest_pair(pool) == std::pair<int, int>{2, 4});
  pool.optimal_values = {1.0};
  pool.tasks.erase(pool.tasks.begin() + 1, pool.tasks.end());
  CHECK(hardest_pair(pool) == std::pair<int, int>{1, 1});
}

TEST_CASE("calibration") {
  SUBCASE("a vacuous target needs one episode") {
    const TaskPool pool = standard_pool();
    const CalibrationResult r = calibrate_k(pool, 0.3, pool.horizon(), 1024, 1);
    CHECK(r.k == 1);
    CHECK(r.rate == 1.0);
  }
  SUBCASE("deterministic single-action task") {
    auto features = std::make_shared<const FeatureMapd>(2, 1, Mat<double>::Ones(1, 2));
    Mat<double> mu(2, 1);
    mu << 1.0, 0.0;
    const LinearTaskd task(features, std::vector<Mat<double>>(3, mu), std::vector<Vec<double>>(3, Vec<double>::Constant(1, 0.6)));
    const CalibrationResult r = calibrate_k(pool_of({task}, 0.5), 0.3, 0.5, 1 << 12, 1);
    CHECK(r.k <= 16);
  }
  SUBCASE("budget exhaustion reports the best attempt") {
    const TaskPool pool = standard_pool();
    try {
      calibrate_k(pool, 0.3, 1e-6, 4, 1);
      FAIL("expected a calibration error");
    } catch (const CalibrationError& e) {
      CHECK(e.best().history.size() == 3);
      CHECK(e.best().rate < kCalibrationRate);
    }
  }
  SUBCASE("standard pool reproduces the pinned baseline") {
    const json b = baseline();
    ExperimentConfig c;
    CHECK(b.at("pool_seed") == c.pool_seed);
    CHECK(b.at("pool").at("num_tasks") == c.pool.num_tasks);
    CHECK(b.at("pool").at("c_sep") == c.pool.c_sep);
    const TaskPool pool = standard_pool(c);
    const std::uint64_t seed = b.at("calibration_seed");

    const CalibrationResult probe = calibrate_k(pool, c.params.beta1, c.pool.c_sep / 8, 1 << 12, seed);
    CHECK(probe.k == b.at("probe").at("k1"));
    CHECK(probe.k == c.params.k1);
    CHECK(json(probe.history) == b.at("probe").at("history"));

    const CalibrationResult learn = calibrate_k(pool, c.params.beta2, c.epsilon, 1 << 12, seed);
    CHECK(learn.k == b.at("learn").at("k2"));
    CHECK(learn.k == c.params.k2);
    CHECK(json(learn.history) == b.at("learn").at("history"));
  }
}

TEST_CASE("sweep over one N reduces to single simulations") {
  ExperimentConfig c;
  c.params = {.beta1 = 0.3, .beta2 = 0.3, .k1 = 256, .k2 = 32};
  c.rounds = 4;
  const TaskPool pool = standard_pool(c);
  const std::vector<std::uint64_t> seeds = {1, 2, 3};
  const SweepReport report = sweep_agents(pool, c, {1}, seeds);
  REQUIRE(report.rows.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    SimulationConfig sim = c.simulation();
    sim.num_agents = 1;
    const SimulationReport r = run_simulation(pool, sim, seeds[i]);
    CHECK(report.rows[i].num_agents == 1);
    CHECK(report.rows[i].seed == seeds[i]);
    CHECK(report.rows[i].mean_episodes_per_agent == r.mean_episodes_per_agent());
    CHECK(report.rows[i].mean_gap == r.mean_gap());
    CHECK(report.rows[i].duplicate_solves == r.duplicate_solves);
  }
}

TEST_CASE("sweep CSV round-trips and parallel sweeps match") {
  ExperimentConfig c;
  c.params = {.beta1 = 0.3, .beta2 = 0.3, .k1 = 128, .k2 = 16};
  c.rounds = 3;
  const TaskPool pool = standard_pool(c);
  const SweepReport seq = sweep_agents(pool, c, {1, 2, 3}, {5, 6});
  c.parallelism = 4;
  const SweepReport par = sweep_agents(pool, c, {1, 2, 3}, {5, 6});
  CHECK(par.rows == seq.rows);

  std::ostringstream out;
  write_sweep_csv(out, seq, provenance_header(c));
  const std::string text = out.str();
  CHECK(text.rfind("# distmt sweep\n# config: ", 0) == 0);
  CHECK(text.find(std::string(kSweepCsvColumns) + "\n") != std::string::npos);
  std::istringstream in(text);
  CHECK(read_sweep_csv(in).rows == seq.rows);
}

TEST_CASE("per-agent learning shrinks with N" * doctest::description("20 paired seeds, N = 1 and 6")) {
  const ExperimentConfig c;
  const TaskPool pool = standard_pool(c);
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= 20; ++s) seeds.push_back(s);
  const SweepReport report = sweep_agents(pool, c, {1, 6}, seeds);
  const double one = report.mean_learn_episodes(1);
  const double six = report.mean_learn_episodes(6);
  MESSAGE("learned-phase episodes per agent: N=1 " << one << ", N=6 " << six << ", ratio " << six / one);
  CHECK(six <= 0.25 * one);
  // Learned rounds per agent, within a factor two of 1/N.
  const double rounds_ratio = (six / c.params.k2) / (one / c.params.k2);
  CHECK(rounds_ratio >= 0.5 / 6);
  CHECK(rounds_ratio <= 2.0 / 6);
}
