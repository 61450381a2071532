#pragma once

// Anomaly decision-making interactive environment: the A (labeled anomaly),
// T (suspected) and U (unlabeled) pools, per-point confidence counters, the
// history-similarity sampler, the adaptive threshold and the pool-dependent
// reward.

#include "tricrlad/common.hpp"
#include "tricrlad/dataset.hpp"
#include "tricrlad/iforest.hpp"

#include <array>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

namespace tricrlad {

enum class Pool : std::uint8_t { A = 0, T = 1, U = 2 };

char pool_code(Pool pool);
Pool parse_pool(char code);

struct EnvConfig {
  double p_a = 0.3;
  double p_t = 0.3;
  double p_u = 0.4;
  double th_init = 0.8;
  int tc_max = 3;
  double ratio_target = 0.1;
  std::size_t th_interval = 10;
  std::size_t history_window = 200;
  std::size_t decision_window = 100;
  double alpha_bias = 0.3;
  std::size_t candidate_cap = 1024;
  double th_min = 0.5;
  double th_max = 0.95;
  double factor_min = 0.95;
  double factor_max = 1.05;
  std::size_t steps_per_episode = 5000;

  // Ablations.
  bool fixed_threshold = false;
  bool simple_reward = false;

  // Alternative readings of underspecified rules; all off by default.
  bool tc_pool_mean_increment = false;
  bool history_valuable_only = false;
  bool u_reward_gated = false;
  bool iforest_centered = false;

  void validate() const;
};

// Disjoint A/T/U membership over internal indices 0..n-1 with O(1) moves.
class PoolPartition {
 public:
  PoolPartition() = default;
  explicit PoolPartition(std::size_t n);

  void assign(std::size_t index, Pool pool);
  void move(std::size_t index, Pool pool);
  Pool pool_of(std::size_t index) const { return pool_[index]; }
  const std::vector<std::size_t>& members(Pool pool) const {
    return members_[static_cast<std::size_t>(pool)];
  }
  std::size_t size(Pool pool) const { return members(pool).size(); }
  std::size_t total() const { return pool_.size(); }

  // Every index sits in exactly the pool it reports.
  bool consistent() const;

 private:
  std::vector<Pool> pool_;
  std::vector<std::size_t> position_;
  std::array<std::vector<std::size_t>, 3> members_;
};

struct EnvState {
  PoolPartition pools;
  std::vector<int> confidence;
  std::vector<bool> labeled_origin;  // true for points that started in A
  double th = 0.8;
  std::deque<Vector> history;
  std::deque<bool> decisions;
  std::uint64_t step_count = 0;
  std::uint64_t threshold_updates = 0;
  // Running action sums per pool, used only by tc_pool_mean_increment.
  std::array<double, 3> action_sum{0.0, 0.0, 0.0};
  std::array<std::uint64_t, 3> action_count{0, 0, 0};
};

// Draws A/T/U with (p_a, p_t, p_u); an empty draw falls back U -> T -> A.
Pool select_pool(const PoolPartition& pools, const EnvConfig& config, Rng& rng);

// (1 - alpha) * mean_i exp(-|o - h_i|^2 / (2 sigma2)) + alpha * r; the
// similarity term is 0 for an empty history.
double score_candidate(const Vector& o, const std::deque<Vector>& history, double sigma2,
                       double alpha, double r);

// Mean per-dimension (population) variance of the history, floored at 1e-6.
double history_variance(const std::deque<Vector>& history);

// Picks the next observation (internal index). U draws score a uniformly
// drawn candidate subset of size min(M, |U|) and take the argmax, ties to
// the lowest id; the winner's features enter the history.
std::size_t sample_point(EnvState& state, const EnvConfig& config, const std::vector<Vector>& features,
                         const std::vector<std::int64_t>& ids, Rng& rng);

double reward(const EnvState& state, const EnvConfig& config, std::size_t index, double action,
              double iforest_score);

// Confidence bookkeeping and pool migration for one decision.
void apply_transition(EnvState& state, const EnvConfig& config, std::size_t index, double action);

// One adaptive threshold adjustment from the decision window; returns TH.
double update_threshold(EnvState& state, const EnvConfig& config);

// Returns an empty string when every state invariant holds, else the first
// violation found.
std::string check_invariants(const EnvState& state, const EnvConfig& config);

struct EnvPoint {
  std::int64_t id = 0;
  Vector features;
  Pool initial_pool = Pool::U;
};

struct StepResult {
  double reward = 0.0;
  bool done = false;
  std::size_t next = 0;
  // The decision just made.
  Pool pool = Pool::U;
  std::int64_t id = 0;
  double action = 0.0;
  double th = 0.0;
};

class Environment {
 public:
  // `iforest_scores` is aligned with `points`; empty means unavailable and
  // the U branch falls back to -0.01.
  Environment(std::vector<EnvPoint> points, std::vector<double> iforest_scores, EnvConfig config,
              std::uint64_t seed);

  // A = d_a, U = d_u; the isolation forest is fit once on d_u.
  static Environment from_regime(const RegimeSplit& regime, const EnvConfig& config,
                                 const IsolationForestConfig& forest_config, std::uint64_t seed);

  std::size_t current() const { return current_; }
  const Vector& observation(std::size_t index) const { return features_[index]; }
  const Vector& current_observation() const { return features_[current_]; }
  std::int64_t id_of(std::size_t index) const { return ids_[index]; }
  std::size_t size() const { return features_.size(); }
  double iforest_score(std::size_t index) const;

  StepResult step(double action);

  // Starts a new episode. Pools, counters and TH persist unless reset_pools.
  void reset_episode(bool reset_pools);

  const EnvState& state() const { return state_; }
  const EnvConfig& config() const { return config_; }

 private:
  void reset_pools();

  EnvConfig config_;
  std::vector<Vector> features_;
  std::vector<std::int64_t> ids_;
  std::vector<Pool> initial_pool_;
  std::vector<double> iforest_;
  EnvState state_;
  Rng rng_;
  std::size_t current_ = 0;
};

}  // namespace tricrlad
