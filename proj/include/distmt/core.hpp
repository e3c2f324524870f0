#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace distmt {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using State = int;
using Action = int;

// One random stream per agent and phase; never shared between threads.
using Rng = std::mt19937_64;

// Raised when a quadratic form or regression target is not numerically sane.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when the multi-agent protocol reaches a state the algorithm forbids.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Stable stream derivation: the same key always yields the same seed, so that
// agent work can be scheduled in any order without changing results.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> key) {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t k : key) h = splitmix64(h ^ splitmix64(k + 0x632BE59BD9B4E019ull));
  return h;
}

inline Rng make_stream(std::uint64_t master, std::initializer_list<std::uint64_t> key) {
  return Rng(derive_seed(master, key));
}

// Deterministic step-indexed Markov policy: action_[h][s].
class Policy {
 public:
  Policy() = default;
  Policy(int horizon, int num_states, Action fill = 0)
      : actions_(static_cast<std::size_t>(horizon),
                 std::vector<Action>(static_cast<std::size_t>(num_states), fill)) {}
  explicit Policy(std::vector<std::vector<Action>> actions) : actions_(std::move(actions)) {}

  int horizon() const { return static_cast<int>(actions_.size()); }
  int num_states() const {
    return actions_.empty() ? 0 : static_cast<int>(actions_.front().size());
  }

  Action operator()(int h, State s) const {
    return actions_.at(static_cast<std::size_t>(h)).at(static_cast<std::size_t>(s));
  }
  Action& at(int h, State s) {
    return actions_.at(static_cast<std::size_t>(h)).at(static_cast<std::size_t>(s));
  }

  const std::vector<std::vector<Action>>& table() const { return actions_; }

  friend bool operator==(const Policy&, const Policy&) = default;

 private:
  std::vector<std::vector<Action>> actions_;
};

struct StepRecord {
  State state = 0;
  Action action = 0;
  double reward = 0.0;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

// One H-step rollout from the initial state.
struct EpisodeRecord {
  std::vector<StepRecord> steps;

  int length() const { return static_cast<int>(steps.size()); }
  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

struct Dataset {
  std::vector<EpisodeRecord> episodes;

  int size() const { return static_cast<int>(episodes.size()); }
  bool empty() const { return episodes.empty(); }
};

}  // namespace distmt
