#pragma once

// Soft actor-critic (value-network variant) over state features on the
// action interval (0, 1).
//
// The policy head emits (mean, log_std) of a Gaussian over a pre-squash
// variable u; actions are a = (tanh(u) + 1) / 2.

#include "tricrlad/checkpoint.hpp"
#include "tricrlad/common.hpp"
#include "tricrlad/diffnet.hpp"

#include <cstdint>
#include <vector>

namespace tricrlad {

struct SacConfig {
  std::vector<std::size_t> hidden = {128, 128};
  double actor_lr = 5e-4;
  double critic_lr = 5e-4;
  double value_lr = 5e-4;
  double alpha_ent = 0.2;
  double gamma = 0.99;
  double target_tau = 0.01;
  double grad_clip = 5.0;
  double log_std_min = -20.0;
  double log_std_max = 2.0;
};

struct ActionSample {
  double action = 0.5;
  double log_prob = 0.0;  // 0 for deterministic actions
  double mean = 0.0;
  double log_std = 0.0;
  double pre_squash = 0.0;
};

// log density of `action` under the squashed Gaussian with the given
// pre-squash mean and log std (change of variables through tanh and the
// affine map to (0, 1)).
double squashed_log_prob(double mean, double log_std, double action);

struct Transition {
  Vector obs;
  double action = 0.0;
  double reward = 0.0;
  Vector next_obs;
};

// FIFO ring of transitions; batches are drawn uniformly without replacement.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::vector<const Transition*> sample(std::size_t batch_size, Rng& rng) const;

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  // Oldest first.
  const Transition& at(std::size_t i) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // oldest element once full
  std::vector<Transition> items_;
};

struct LossAndGrads {
  double loss = 0.0;
  std::vector<Matrix> grads;
};

struct CriticLosses {
  double q1 = 0.0;
  double q2 = 0.0;
};

class Agent {
 public:
  Agent(std::size_t feature_dim, const SacConfig& config, std::uint64_t seed);

  ActionSample sample_action(const RowVector& feature, Rng& rng, bool deterministic) const;
  // (tanh(mean) + 1) / 2 for every row.
  Vector deterministic_actions(const Matrix& features) const;

  // y = r + gamma * V'(F')
  Vector compute_targets(const Vector& rewards, const Matrix& next_features) const;

  // Losses with gradients at fixed exploration noise (one standard normal per
  // row); the update_* methods draw the noise and take an Adam step.
  LossAndGrads critic_loss(int which, const Matrix& features, const Vector& actions,
                           const Vector& targets) const;
  LossAndGrads value_loss(const Matrix& features, const Vector& noise) const;
  LossAndGrads policy_loss(const Matrix& features, const Vector& noise) const;

  CriticLosses update_critics(const Matrix& features, const Vector& actions, const Vector& targets);
  double update_value(const Matrix& features, Rng& rng);
  double update_policy(const Matrix& features, Rng& rng);
  void soft_update_target();

  const DenseNet& policy() const { return policy_; }
  const DenseNet& q1() const { return q1_; }
  const DenseNet& q2() const { return q2_; }
  const DenseNet& value() const { return value_; }
  const DenseNet& target_value() const { return target_value_; }
  DenseNet& policy() { return policy_; }
  DenseNet& q1() { return q1_; }
  DenseNet& q2() { return q2_; }
  DenseNet& value() { return value_; }
  DenseNet& target_value() { return target_value_; }
  const SacConfig& config() const { return config_; }
  SacConfig& config() { return config_; }

  void save(Checkpoint& ckpt) const;
  void load(const Checkpoint& ckpt);

 private:
  struct PolicyHead {
    Vector mean;
    Vector log_std;
    std::vector<bool> clamped;
  };
  PolicyHead split_head(const Matrix& raw) const;
  Matrix critic_input(const Matrix& features, const Vector& actions) const;
  void step(DenseNet& net, Adam& adam, std::vector<Matrix>& grads);

  SacConfig config_;
  DenseNet policy_;
  DenseNet q1_;
  DenseNet q2_;
  DenseNet value_;
  DenseNet target_value_;
  Adam policy_adam_;
  Adam q1_adam_;
  Adam q2_adam_;
  Adam value_adam_;
};

}  // namespace tricrlad
