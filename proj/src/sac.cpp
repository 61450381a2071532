#include "tricrlad/sac.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace tricrlad {

namespace {

constexpr double kActionEdge = 1e-12;

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// log(da/du) for a = (tanh(u) + 1) / 2, stable for large |u|.
double log_squash_jacobian(double u) {
  return 2.0 * (std::numbers::ln2 - u - softplus(-2.0 * u)) - std::numbers::ln2;
}

double gaussian_log_density(double noise, double log_std) {
  return -0.5 * noise * noise - log_std - 0.5 * std::log(2.0 * std::numbers::pi);
}

double squash(double u) { return std::clamp(0.5 * (std::tanh(u) + 1.0), kActionEdge, 1.0 - kActionEdge); }

std::vector<std::size_t> layer_sizes(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

std::vector<const Matrix*> shapes_of(const DenseNet& net) { return net.parameters(); }

}  // namespace

double squashed_log_prob(double mean, double log_std, double action) {
  const double u = std::atanh(2.0 * action - 1.0);
  const double noise = (u - mean) / std::exp(log_std);
  return gaussian_log_density(noise, log_std) - log_squash_jacobian(u);
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw UsageError("replay buffer: capacity must be >= 1");
  items_.reserve(std::min<std::size_t>(capacity_, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return;
  }
  items_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= items_.size()) throw UsageError("replay buffer: index out of range");
  return items_[(head_ + i) % items_.size()];
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t batch_size, Rng& rng) const {
  if (batch_size > items_.size()) {
    throw UsageError("replay buffer: cannot sample " + std::to_string(batch_size) + " from " +
                     std::to_string(items_.size()) + " transitions");
  }
  // Floyd's algorithm: distinct indices without touching the whole buffer.
  std::vector<std::size_t> chosen;
  chosen.reserve(batch_size);
  const std::size_t n = items_.size();
  for (std::size_t j = n - batch_size; j < n; ++j) {
    const std::size_t t = uniform_index(rng, j + 1);
    if (std::find(chosen.begin(), chosen.end(), t) == chosen.end()) {
      chosen.push_back(t);
    } else {
      chosen.push_back(j);
    }
  }
  std::vector<const Transition*> out;
  out.reserve(batch_size);
  for (std::size_t i : chosen) out.push_back(&at(i));
  return out;
}

Agent::Agent(std::size_t feature_dim, const SacConfig& config, std::uint64_t seed) : config_(config) {
  const auto policy_sizes = layer_sizes(feature_dim, config.hidden, 2);
  const auto critic_sizes = layer_sizes(feature_dim + 1, config.hidden, 1);
  const auto value_sizes = layer_sizes(feature_dim, config.hidden, 1);
  policy_ = xavier_init(policy_sizes, derive_seed(seed, 11));
  q1_ = xavier_init(critic_sizes, derive_seed(seed, 12));
  q2_ = xavier_init(critic_sizes, derive_seed(seed, 13));
  value_ = xavier_init(value_sizes, derive_seed(seed, 14));
  target_value_ = value_;
  policy_adam_ = Adam(AdamConfig{.lr = config.actor_lr}, shapes_of(policy_));
  q1_adam_ = Adam(AdamConfig{.lr = config.critic_lr}, shapes_of(q1_));
  q2_adam_ = Adam(AdamConfig{.lr = config.critic_lr}, shapes_of(q2_));
  value_adam_ = Adam(AdamConfig{.lr = config.value_lr}, shapes_of(value_));
}

Agent::PolicyHead Agent::split_head(const Matrix& raw) const {
  PolicyHead head;
  head.mean = raw.col(0);
  head.log_std.resize(raw.rows());
  head.clamped.resize(static_cast<std::size_t>(raw.rows()));
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    const double ls = raw(i, 1);
    head.log_std[i] = std::clamp(ls, config_.log_std_min, config_.log_std_max);
    head.clamped[static_cast<std::size_t>(i)] = ls < config_.log_std_min || ls > config_.log_std_max;
  }
  return head;
}

Matrix Agent::critic_input(const Matrix& features, const Vector& actions) const {
  Matrix in(features.rows(), features.cols() + 1);
  in << features, actions;
  return in;
}

ActionSample Agent::sample_action(const RowVector& feature, Rng& rng, bool deterministic) const {
  if (!feature.allFinite()) throw NumericalError("sample_action: non-finite state feature");
  const Matrix raw = policy_.predict(feature);
  const PolicyHead head = split_head(raw);
  ActionSample s;
  s.mean = head.mean[0];
  s.log_std = head.log_std[0];
  if (deterministic) {
    s.pre_squash = s.mean;
    s.action = squash(s.mean);
    return s;
  }
  const double noise = standard_normal(rng);
  s.pre_squash = s.mean + std::exp(s.log_std) * noise;
  s.action = squash(s.pre_squash);
  s.log_prob = gaussian_log_density(noise, s.log_std) - log_squash_jacobian(s.pre_squash);
  if (!std::isfinite(s.log_prob)) throw NumericalError("sample_action: non-finite log probability");
  return s;
}

Vector Agent::deterministic_actions(const Matrix& features) const {
  const Matrix raw = policy_.predict(features);
  Vector out(raw.rows());
  for (Eigen::Index i = 0; i < raw.rows(); ++i) out[i] = squash(raw(i, 0));
  return out;
}

Vector Agent::compute_targets(const Vector& rewards, const Matrix& next_features) const {
  return rewards + config_.gamma * target_value_.predict(next_features).col(0);
}

LossAndGrads Agent::critic_loss(int which, const Matrix& features, const Vector& actions,
                                const Vector& targets) const {
  const DenseNet& q = which == 1 ? q1_ : q2_;
  const ForwardPass pass = q.forward(critic_input(features, actions));
  const Vector err = pass.output.col(0) - targets;
  const double n = static_cast<double>(err.size());
  LossAndGrads out;
  out.loss = err.squaredNorm() / n;
  out.grads = q.backward(pass.tape, 2.0 * err / n).params;
  return out;
}

LossAndGrads Agent::value_loss(const Matrix& features, const Vector& noise) const {
  const PolicyHead head = split_head(policy_.predict(features));
  const Eigen::Index n = features.rows();
  Vector actions(n);
  Vector log_probs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = head.mean[i] + std::exp(head.log_std[i]) * noise[i];
    actions[i] = squash(u);
    log_probs[i] = gaussian_log_density(noise[i], head.log_std[i]) - log_squash_jacobian(u);
  }
  const Matrix in = critic_input(features, actions);
  const Vector min_q = q1_.predict(in).col(0).cwiseMin(q2_.predict(in).col(0));
  const Vector target = min_q - config_.alpha_ent * log_probs;

  const ForwardPass pass = value_.forward(features);
  const Vector err = pass.output.col(0) - target;
  LossAndGrads out;
  out.loss = err.squaredNorm() / static_cast<double>(n);
  out.grads = value_.backward(pass.tape, 2.0 * err / static_cast<double>(n)).params;
  return out;
}

LossAndGrads Agent::policy_loss(const Matrix& features, const Vector& noise) const {
  const ForwardPass pol = policy_.forward(features);
  const PolicyHead head = split_head(pol.output);
  const Eigen::Index n = features.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double alpha = config_.alpha_ent;

  Vector u(n);
  Vector actions(n);
  Vector log_probs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    u[i] = head.mean[i] + std::exp(head.log_std[i]) * noise[i];
    actions[i] = squash(u[i]);
    log_probs[i] = gaussian_log_density(noise[i], head.log_std[i]) - log_squash_jacobian(u[i]);
  }
  const Matrix in = critic_input(features, actions);
  const ForwardPass p1 = q1_.forward(in);
  const ForwardPass p2 = q2_.forward(in);

  // Route dL/dQ = -1/N through whichever critic is smaller for each row.
  Matrix d1 = Matrix::Zero(n, 1);
  Matrix d2 = Matrix::Zero(n, 1);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool first = p1.output(i, 0) <= p2.output(i, 0);
    const double q = first ? p1.output(i, 0) : p2.output(i, 0);
    (first ? d1 : d2)(i, 0) = -inv_n;
    loss += (alpha * log_probs[i] - q) * inv_n;
  }
  const Matrix da1 = q1_.backward(p1.tape, d1).input;
  const Matrix da2 = q2_.backward(p2.tape, d2).input;
  const Eigen::Index a_col = features.cols();

  Matrix d_head(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = std::tanh(u[i]);
    const double d_action = da1(i, a_col) + da2(i, a_col);
    // d log_prob / du = 2 tanh(u) at fixed noise.
    const double d_u = d_action * 0.5 * (1.0 - t * t) + alpha * inv_n * 2.0 * t;
    d_head(i, 0) = d_u;
    const double std_dev = std::exp(head.log_std[i]);
    d_head(i, 1) = head.clamped[static_cast<std::size_t>(i)] ? 0.0 : d_u * std_dev * noise[i] - alpha * inv_n;
  }
  LossAndGrads out;
  out.loss = loss;
  out.grads = policy_.backward(pol.tape, d_head).params;
  return out;
}

void Agent::step(DenseNet& net, Adam& adam, std::vector<Matrix>& grads) {
  clip_global_norm(grads, config_.grad_clip);
  adam.step(net.parameters(), grads);
}

CriticLosses Agent::update_critics(const Matrix& features, const Vector& actions, const Vector& targets) {
  LossAndGrads l1 = critic_loss(1, features, actions, targets);
  LossAndGrads l2 = critic_loss(2, features, actions, targets);
  if (!std::isfinite(l1.loss) || !std::isfinite(l2.loss)) throw NumericalError("critic loss is not finite");
  step(q1_, q1_adam_, l1.grads);
  step(q2_, q2_adam_, l2.grads);
  return {l1.loss, l2.loss};
}

double Agent::update_value(const Matrix& features, Rng& rng) {
  Vector noise(features.rows());
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise[i] = standard_normal(rng);
  LossAndGrads l = value_loss(features, noise);
  if (!std::isfinite(l.loss)) throw NumericalError("value loss is not finite");
  step(value_, value_adam_, l.grads);
  return l.loss;
}

double Agent::update_policy(const Matrix& features, Rng& rng) {
  Vector noise(features.rows());
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise[i] = standard_normal(rng);
  LossAndGrads l = policy_loss(features, noise);
  if (!std::isfinite(l.loss)) throw NumericalError("policy loss is not finite");
  step(policy_, policy_adam_, l.grads);
  return l.loss;
}

void Agent::soft_update_target() { soft_update(target_value_, value_, config_.target_tau); }

void Agent::save(Checkpoint& ckpt) const {
  put_net(ckpt, "policy", policy_);
  put_net(ckpt, "q1", q1_);
  put_net(ckpt, "q2", q2_);
  put_net(ckpt, "value", value_);
  put_net(ckpt, "target_value", target_value_);
  put_adam(ckpt, "policy.adam", policy_adam_);
  put_adam(ckpt, "q1.adam", q1_adam_);
  put_adam(ckpt, "q2.adam", q2_adam_);
  put_adam(ckpt, "value.adam", value_adam_);
}

void Agent::load(const Checkpoint& ckpt) {
  auto restore = [&](const std::string& name, DenseNet& net) {
    DenseNet loaded = get_net(ckpt, name);
    if (!loaded.same_architecture(net)) throw DataError("checkpoint: architecture mismatch for " + name);
    net = std::move(loaded);
  };
  restore("policy", policy_);
  restore("q1", q1_);
  restore("q2", q2_);
  restore("value", value_);
  restore("target_value", target_value_);
  get_adam(ckpt, "policy.adam", policy_adam_);
  get_adam(ckpt, "q1.adam", q1_adam_);
  get_adam(ckpt, "q2.adam", q2_adam_);
  get_adam(ckpt, "value.adam", value_adam_);
}

}  // namespace tricrlad
