#include "tricrlad/adie.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace tricrlad {

namespace {
constexpr double kFallbackReward = -0.01;
constexpr double kMinVariance = 1e-6;

std::size_t slot(Pool pool) { return static_cast<std::size_t>(pool); }
}  // namespace

char pool_code(Pool pool) {
  switch (pool) {
    case Pool::A: return 'A';
    case Pool::T: return 'T';
    case Pool::U: return 'U';
  }
  return '?';
}

Pool parse_pool(char code) {
  switch (code) {
    case 'A': return Pool::A;
    case 'T': return Pool::T;
    case 'U': return Pool::U;
    default: throw DataError(std::string("unknown pool code '") + code + "'");
  }
}

void EnvConfig::validate() const {
  auto fail = [](const std::string& msg) { throw UsageError("env config: " + msg); };
  if (p_a < 0 || p_t < 0 || p_u < 0 || std::abs(p_a + p_t + p_u - 1.0) > 1e-9) {
    fail("pool probabilities must be non-negative and sum to 1");
  }
  if (tc_max < 1) fail("tc_max must be >= 1");
  if (th_interval < 1) fail("th_interval must be >= 1");
  if (history_window < 1 || decision_window < 1) fail("history/decision windows must be >= 1");
  if (candidate_cap < 1) fail("candidate_cap must be >= 1");
  if (alpha_bias < 0 || alpha_bias > 1) fail("alpha_bias must lie in [0, 1]");
  if (!(th_min <= th_max) || th_min < 0 || th_max > 1) fail("threshold bounds must satisfy 0 <= th_min <= th_max <= 1");
  if (th_init < th_min || th_init > th_max) fail("th_init must lie in [th_min, th_max]");
  if (!(factor_min <= 1.0 && 1.0 <= factor_max) || factor_min <= 0) fail("factor clamp must bracket 1");
  if (steps_per_episode < 1) fail("steps_per_episode must be >= 1");
}

PoolPartition::PoolPartition(std::size_t n) : pool_(n, Pool::U), position_(n, 0) {
  for (std::size_t i = 0; i < n; ++i) {
    position_[i] = members_[slot(Pool::U)].size();
    members_[slot(Pool::U)].push_back(i);
  }
}

void PoolPartition::assign(std::size_t index, Pool pool) { move(index, pool); }

void PoolPartition::move(std::size_t index, Pool pool) {
  const Pool from = pool_[index];
  if (from == pool) return;
  auto& src = members_[slot(from)];
  const std::size_t pos = position_[index];
  src[pos] = src.back();
  position_[src[pos]] = pos;
  src.pop_back();
  auto& dst = members_[slot(pool)];
  position_[index] = dst.size();
  dst.push_back(index);
  pool_[index] = pool;
}

bool PoolPartition::consistent() const {
  std::size_t count = 0;
  for (std::size_t p = 0; p < 3; ++p) {
    for (std::size_t k = 0; k < members_[p].size(); ++k) {
      const std::size_t idx = members_[p][k];
      if (idx >= pool_.size() || slot(pool_[idx]) != p || position_[idx] != k) return false;
    }
    count += members_[p].size();
  }
  return count == pool_.size();
}

Pool select_pool(const PoolPartition& pools, const EnvConfig& config, Rng& rng) {
  const double r = uniform01(rng);
  Pool drawn = Pool::U;
  if (r < config.p_a) {
    drawn = Pool::A;
  } else if (r < config.p_a + config.p_t) {
    drawn = Pool::T;
  }
  if (pools.size(drawn) > 0) return drawn;
  for (Pool fallback : {Pool::U, Pool::T, Pool::A}) {
    if (pools.size(fallback) > 0) return fallback;
  }
  throw DataError("select_pool: every pool is empty");
}

double history_variance(const std::deque<Vector>& history) {
  if (history.size() < 2) return kMinVariance;
  const auto dim = history.front().size();
  Vector mean = Vector::Zero(dim);
  for (const auto& h : history) mean += h;
  mean /= static_cast<double>(history.size());
  Vector var = Vector::Zero(dim);
  for (const auto& h : history) var += (h - mean).cwiseAbs2();
  var /= static_cast<double>(history.size());
  return std::max(var.mean(), kMinVariance);
}

double score_candidate(const Vector& o, const std::deque<Vector>& history, double sigma2,
                       double alpha, double r) {
  double similarity = 0.0;
  if (!history.empty()) {
    for (const auto& h : history) similarity += std::exp(-(o - h).squaredNorm() / (2.0 * sigma2));
    similarity /= static_cast<double>(history.size());
  }
  return (1.0 - alpha) * similarity + alpha * r;
}

std::size_t sample_point(EnvState& state, const EnvConfig& config, const std::vector<Vector>& features,
                         const std::vector<std::int64_t>& ids, Rng& rng) {
  const Pool pool = select_pool(state.pools, config, rng);
  const auto& members = state.pools.members(pool);
  if (pool != Pool::U) return members[uniform_index(rng, members.size())];

  std::vector<std::size_t> candidates = members;
  if (candidates.size() > config.candidate_cap) {
    for (std::size_t i = 0; i < config.candidate_cap; ++i) {
      std::swap(candidates[i], candidates[i + uniform_index(rng, candidates.size() - i)]);
    }
    candidates.resize(config.candidate_cap);
  }

  const auto m = static_cast<Eigen::Index>(candidates.size());
  Vector similarity = Vector::Zero(m);
  if (!state.history.empty()) {
    const auto dim = features[candidates.front()].size();
    const auto n = static_cast<Eigen::Index>(state.history.size());
    Matrix cand(m, dim);
    for (Eigen::Index i = 0; i < m; ++i) cand.row(i) = features[candidates[static_cast<std::size_t>(i)]].transpose();
    Matrix hist(n, dim);
    for (Eigen::Index i = 0; i < n; ++i) hist.row(i) = state.history[static_cast<std::size_t>(i)].transpose();
    const double sigma2 = history_variance(state.history);
    // |c - h|^2 = |c|^2 + |h|^2 - 2 c.h
    Matrix sq = -2.0 * cand * hist.transpose();
    sq.colwise() += cand.rowwise().squaredNorm();
    sq.rowwise() += hist.rowwise().squaredNorm().transpose();
    similarity = (-sq.cwiseMax(0.0) / (2.0 * sigma2)).array().exp().rowwise().mean().matrix();
  }

  std::size_t best = candidates.front();
  double best_score = -1.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const std::size_t idx = candidates[static_cast<std::size_t>(i)];
    const double score = (1.0 - config.alpha_bias) * similarity[i] + config.alpha_bias * uniform01(rng);
    if (score > best_score || (score == best_score && ids[idx] < ids[best])) {
      best = idx;
      best_score = score;
    }
  }
  if (!config.history_valuable_only) {
    state.history.push_back(features[best]);
    while (state.history.size() > config.history_window) state.history.pop_front();
  }
  return best;
}

double reward(const EnvState& state, const EnvConfig& config, std::size_t index, double action,
              double iforest_score) {
  if (index >= state.pools.total()) throw UsageError("reward: unknown point index");
  const Pool pool = state.pools.pool_of(index);
  const double th = state.th;
  if (config.simple_reward) {
    switch (pool) {
      case Pool::A: return action >= th ? 1.0 : -1.0;
      case Pool::T: return action < th ? -1.0 : 0.0;
      case Pool::U: return 0.0;
    }
  }
  switch (pool) {
    case Pool::A:
      return 2.0 * std::max(0.0, action - th) + 1.0;
    case Pool::T:
      if (action >= th) return static_cast<double>(state.confidence[index]) / config.tc_max;
      return -1.0;
    case Pool::U: {
      if (!std::isfinite(iforest_score)) return kFallbackReward;
      if (config.u_reward_gated && action < th) return kFallbackReward;
      const double s = config.iforest_centered ? iforest_score - 0.5 : iforest_score;
      return (action - th) * s;
    }
  }
  return kFallbackReward;
}

void apply_transition(EnvState& state, const EnvConfig& config, std::size_t index, double action) {
  const Pool pool = state.pools.pool_of(index);
  const std::size_t s = slot(pool);
  const bool above_pool_mean =
      state.action_count[s] > 0 && action > state.action_sum[s] / static_cast<double>(state.action_count[s]);
  state.action_sum[s] += action;
  state.action_count[s] += 1;
  if (pool == Pool::A) return;

  int& c = state.confidence[index];
  if (action > state.th) {
    c += 1;
    if (config.tc_pool_mean_increment && above_pool_mean) c += 1;
    if (pool == Pool::U) state.pools.move(index, Pool::T);
    if (c >= config.tc_max) state.pools.move(index, Pool::A);
  } else if (pool == Pool::T) {
    c -= 1;
    if (c <= 0) {
      c = 0;
      state.pools.move(index, Pool::U);
    }
  }
}

double update_threshold(EnvState& state, const EnvConfig& config) {
  if (state.decisions.empty()) return state.th;
  const auto flagged = std::count(state.decisions.begin(), state.decisions.end(), true);
  const double ratio_current = static_cast<double>(flagged) / static_cast<double>(state.decisions.size());
  const double factor =
      std::clamp(1.0 + ratio_current - config.ratio_target, config.factor_min, config.factor_max);
  state.th = std::clamp(factor * state.th, config.th_min, config.th_max);
  state.threshold_updates += 1;
  return state.th;
}

std::string check_invariants(const EnvState& state, const EnvConfig& config) {
  std::ostringstream msg;
  if (!state.pools.consistent()) return "pool partition is inconsistent";
  if (state.confidence.size() != state.pools.total()) return "confidence table size mismatch";
  if (state.th < config.th_min || state.th > config.th_max) {
    msg << "TH " << state.th << " outside [" << config.th_min << ", " << config.th_max << "]";
    return msg.str();
  }
  for (std::size_t i = 0; i < state.confidence.size(); ++i) {
    const int c = state.confidence[i];
    switch (state.pools.pool_of(i)) {
      case Pool::U:
        if (c != 0) msg << "point " << i << " in U has C=" << c;
        break;
      case Pool::T:
        if (c < 1 || c >= config.tc_max) msg << "point " << i << " in T has C=" << c;
        break;
      case Pool::A:
        if (!state.labeled_origin[i] && c < config.tc_max) msg << "promoted point " << i << " in A has C=" << c;
        break;
    }
    if (!msg.str().empty()) return msg.str();
  }
  return {};
}

Environment::Environment(std::vector<EnvPoint> points, std::vector<double> iforest_scores,
                         EnvConfig config, std::uint64_t seed)
    : config_(config), iforest_(std::move(iforest_scores)), rng_(derive_seed(seed, 303)) {
  config_.validate();
  if (points.empty()) throw DataError("environment: no training points");
  if (!iforest_.empty() && iforest_.size() != points.size()) {
    throw UsageError("environment: isolation scores are not aligned with points");
  }
  const Eigen::Index dim = points.front().features.size();
  for (auto& p : points) {
    if (p.features.size() != dim) {
      throw DataError("environment: points have inconsistent dimensions");
    }
    ids_.push_back(p.id);
    initial_pool_.push_back(p.initial_pool);
    features_.push_back(std::move(p.features));
  }
  reset_pools();
  state_.th = config_.th_init;
  current_ = sample_point(state_, config_, features_, ids_, rng_);
}

Environment Environment::from_regime(const RegimeSplit& regime, const EnvConfig& config,
                                     const IsolationForestConfig& forest_config, std::uint64_t seed) {
  if (regime.d_u.size() < 2) throw DataError("environment: d_u needs at least 2 points");
  std::vector<EnvPoint> points;
  for (const auto& p : regime.d_a.points) points.push_back({p.id, p.features, Pool::A});
  for (const auto& p : regime.d_u.points) points.push_back({p.id, p.features, Pool::U});
  const IsolationForest forest =
      IsolationForest::fit(regime.d_u.feature_matrix(), forest_config, derive_seed(seed, 404));
  std::vector<double> scores;
  scores.reserve(points.size());
  for (const auto& p : points) scores.push_back(forest.score(p.features));
  return Environment(std::move(points), std::move(scores), config, seed);
}

double Environment::iforest_score(std::size_t index) const {
  return iforest_.empty() ? std::numeric_limits<double>::quiet_NaN() : iforest_[index];
}

void Environment::reset_pools() {
  state_.pools = PoolPartition(features_.size());
  state_.confidence.assign(features_.size(), 0);
  state_.labeled_origin.assign(features_.size(), false);
  for (std::size_t i = 0; i < features_.size(); ++i) {
    state_.pools.assign(i, initial_pool_[i]);
    state_.labeled_origin[i] = initial_pool_[i] == Pool::A;
  }
}

StepResult Environment::step(double action) {
  if (!std::isfinite(action) || action < 0.0 || action > 1.0) {
    throw NumericalError("environment: action " + std::to_string(action) + " outside [0, 1]");
  }
  StepResult result;
  const std::size_t index = current_;
  result.pool = state_.pools.pool_of(index);
  result.id = ids_[index];
  result.action = action;
  result.th = state_.th;
  result.reward = reward(state_, config_, index, action, iforest_score(index));
  apply_transition(state_, config_, index, action);

  state_.decisions.push_back(action >= result.th);
  while (state_.decisions.size() > config_.decision_window) state_.decisions.pop_front();
  if (config_.history_valuable_only && result.pool == Pool::U && result.reward > 0.0) {
    state_.history.push_back(features_[index]);
    while (state_.history.size() > config_.history_window) state_.history.pop_front();
  }

  state_.step_count += 1;
  if (!config_.fixed_threshold && state_.step_count % config_.th_interval == 0) {
    update_threshold(state_, config_);
  }
  current_ = sample_point(state_, config_, features_, ids_, rng_);
  result.next = current_;
  result.done = state_.step_count % config_.steps_per_episode == 0;
  return result;
}

void Environment::reset_episode(bool reset_pools_too) {
  if (reset_pools_too) {
    reset_pools();
    state_.th = config_.th_init;
    state_.decisions.clear();
    state_.history.clear();
    current_ = sample_point(state_, config_, features_, ids_, rng_);
  }
}

}  // namespace tricrlad
