#include "tricrlad/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace tricrlad {

namespace {

constexpr std::uint64_t kExtractorStream = 505;
constexpr std::uint64_t kAgentStream = 606;
constexpr std::uint64_t kTrainerStream = 707;

void require_finite(double value, const char* what) {
  if (!std::isfinite(value)) throw NumericalError(std::string(what) + " is not finite");
}

[[noreturn]] void rethrow_with_context(const std::string& context) {
  try {
    throw;
  } catch (const DataError& e) {
    throw DataError(context + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(context + ": " + e.what());
  } catch (const UsageError& e) {
    throw UsageError(context + ": " + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(context + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp + "'");
    out << text;
    if (!out) throw DataError("failed writing '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Dataset load_config_dataset(const RunConfig& config) {
  if (config.data_path.empty()) throw UsageError("config: 'data' is not set");
  LoadOptions opts;
  opts.delimiter = config.delimiter;
  opts.label_column = config.label_column;
  Dataset data = load_table(config.data_path, opts);
  if (!config.dataset_name.empty()) data.name = config.dataset_name;
  return data;
}

PreparedData prepare_data(const Dataset& data, const RunConfig& config, std::uint64_t seed) {
  PreparedData out;
  auto [train, test] = split_train_test(data, config.test_fraction, seed);
  out.train_raw = std::move(train);
  out.test_raw = std::move(test);
  out.scaler = MinMaxScaler::fit(out.train_raw);
  RegimeOptions opts;
  opts.base = config.contamination_base;
  opts.shortfall = config.regime_shortfall;
  opts.allow_empty_labeled = config.allow_unlabeled;
  out.regime = build_regime(out.scaler.transform(out.train_raw), config.anomalies_ratio,
                            config.contamination_ratio, seed, opts);
  out.regime.test = out.scaler.transform(out.test_raw);
  return out;
}

std::unique_ptr<FeatureExtractor> make_extractor(const RunConfig& config, std::size_t dim,
                                                 std::uint64_t seed) {
  if (config.ablation.no_causal) {
    return std::make_unique<PlainEncoder>(dim, config.encoder_hidden, config.cfe, seed);
  }
  return std::make_unique<CausalFeatureExtractor>(dim, config.cfe, seed);
}

TrainedModel::TrainedModel(std::unique_ptr<FeatureExtractor> extractor_in, Agent agent_in,
                           MinMaxScaler scaler_in, std::string config_text_in)
    : extractor(std::move(extractor_in)),
      agent(std::move(agent_in)),
      scaler(std::move(scaler_in)),
      config_text(std::move(config_text_in)) {}

TrainedModel::TrainedModel(const TrainedModel& other)
    : extractor(other.extractor ? other.extractor->clone() : nullptr),
      agent(other.agent),
      scaler(other.scaler),
      config_text(other.config_text) {}

TrainedModel& TrainedModel::operator=(const TrainedModel& other) {
  if (this != &other) {
    TrainedModel copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Checkpoint TrainedModel::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.set_meta("config", config_text);
  ckpt.set_meta("config_hash", fnv1a_hex(config_text));
  ckpt.set_meta("input_dim", std::to_string(extractor->input_dim()));
  extractor->save(ckpt);
  agent.save(ckpt);
  ckpt.put("scaler.min", scaler.min().transpose());
  ckpt.put("scaler.max", scaler.max().transpose());
  return ckpt;
}

TrainedModel TrainedModel::from_checkpoint(const Checkpoint& ckpt) {
  const std::string& text = ckpt.meta("config");
  if (fnv1a_hex(text) != ckpt.meta("config_hash")) throw DataError("checkpoint: config hash mismatch");
  const RunConfig config = RunConfig::parse(text);
  const std::size_t dim = std::stoull(ckpt.meta("input_dim"));
  auto extractor = make_extractor(config, dim, 0);
  extractor->load(ckpt);
  Agent agent(extractor->feature_dim(), config.sac, 0);
  agent.load(ckpt);
  const Matrix& lo = ckpt.get("scaler.min");
  const Matrix& hi = ckpt.get("scaler.max");
  if (lo.rows() != 1 || hi.rows() != 1 || static_cast<std::size_t>(lo.cols()) != dim) {
    throw DataError("checkpoint: scaler tensors have the wrong shape");
  }
  MinMaxScaler scaler(lo.row(0).transpose(), hi.row(0).transpose());
  return TrainedModel(std::move(extractor), std::move(agent), std::move(scaler), text);
}

std::string step_log_csv(const std::vector<StepRecord>& records) {
  std::ostringstream out;
  out << "episode,step,pool,id,action,th,reward\n";
  for (const auto& r : records) {
    out << r.episode << ',' << r.step << ',' << pool_code(r.pool) << ',' << r.id << ','
        << fmt(r.action) << ',' << fmt(r.th) << ',' << fmt(r.reward) << '\n';
  }
  return out.str();
}

std::vector<StepRecord> parse_step_log(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("episode,step,pool,id,action,th,reward", 0) != 0) {
    throw DataError("step log: missing or unexpected header");
  }
  std::vector<StepRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cells[7];
    for (auto& cell : cells) std::getline(row, cell, ',');
    try {
      StepRecord r;
      r.episode = static_cast<std::uint32_t>(std::stoul(cells[0]));
      r.step = static_cast<std::uint32_t>(std::stoul(cells[1]));
      if (cells[2].size() != 1) throw DataError("bad pool");
      r.pool = parse_pool(cells[2][0]);
      r.id = std::stoll(cells[3]);
      r.action = std::stod(cells[4]);
      r.th = std::stod(cells[5]);
      r.reward = std::stod(cells[6]);
      out.push_back(r);
    } catch (const std::exception&) {
      throw DataError("step log line " + std::to_string(line_no) + ": malformed record");
    }
  }
  return out;
}

std::vector<StepRecord> load_step_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open step log '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_step_log(buf.str());
}

void apply_ablation(RunConfig& config, const std::string& flag) {
  if (flag == "fixed_threshold") {
    config.ablation.fixed_threshold = true;
  } else if (flag == "simple_reward") {
    config.ablation.simple_reward = true;
  } else if (flag == "no_causal") {
    config.ablation.no_causal = true;
  } else if (flag != "none" && flag != "full") {
    throw UsageError("unknown ablation flag '" + flag +
                     "' (expected fixed_threshold, simple_reward or no_causal)");
  }
}

std::filesystem::path checkpoint_path(const RunConfig& config, std::uint64_t seed) {
  return std::filesystem::path(config.output_dir) / (config.run_name(seed) + ".ckpt.json");
}

std::filesystem::path step_log_path(const RunConfig& config, std::uint64_t seed) {
  return std::filesystem::path(config.output_dir) / (config.run_name(seed) + ".steps.csv");
}

TrainResult train(const RunConfig& config, const RegimeSplit& regime, const MinMaxScaler& scaler,
                  std::uint64_t seed, const TrainOptions& options) {
  config.validate();
  const EnvConfig env_config = config.resolved_env();
  Environment env = Environment::from_regime(regime, env_config, config.iforest, seed);
  const std::size_t dim = static_cast<std::size_t>(env.current_observation().size());

  auto extractor = make_extractor(config, dim, derive_seed(seed, kExtractorStream));
  Agent agent(extractor->feature_dim(), config.sac, derive_seed(seed, kAgentStream));
  Rng rng(derive_seed(seed, kTrainerStream));
  ReplayBuffer buffer(config.replay_capacity);

  TrainResult result{TrainedModel(nullptr, agent, scaler, config.canonical(false)), {}, 0, 0, 0, 0, 0, {}, {}};
  result.log.reserve(config.episodes * config.steps_per_episode);
  const std::uint64_t cf_before = counterfactual_invocations();
  result.first_update_step = config.episodes * config.steps_per_episode;
  if (options.write_files) {
    result.checkpoint_path = checkpoint_path(config, seed);
    result.step_log_path = step_log_path(config, seed);
  }

  const auto n_batch = config.batch_size;
  Matrix obs(n_batch, dim);
  Matrix next_obs(n_batch, dim);
  Vector actions(n_batch);
  Vector rewards(n_batch);

  std::uint64_t global = 0;
  for (std::size_t episode = 0; episode < config.episodes; ++episode) {
    if (episode > 0) env.reset_episode(config.reset_pools_per_episode);
    for (std::size_t step = 0; step < config.steps_per_episode; ++step, ++global) {
      try {
        const Vector o = env.current_observation();
        double action = 0.0;
        if (global < config.warmup_steps) {
          action = uniform01(rng);
        } else {
          const Matrix feature = extractor->encode(o.transpose());
          action = agent.sample_action(feature.row(0), rng, false).action;
        }
        const StepResult sr = env.step(action);
        require_finite(sr.reward, "reward");
        buffer.push(Transition{o, action, sr.reward, env.observation(sr.next)});
        result.log.push_back(StepRecord{static_cast<std::uint32_t>(episode),
                                        static_cast<std::uint32_t>(step), sr.pool, sr.id, sr.action,
                                        sr.th, sr.reward});
        if (options.check_invariants) {
          const std::string violation = check_invariants(env.state(), env.config());
          if (!violation.empty()) throw NumericalError("invariant violated: " + violation);
        }

        if (buffer.size() > config.warmup_size) {
          const auto batch = buffer.sample(n_batch, rng);
          for (std::size_t i = 0; i < batch.size(); ++i) {
            obs.row(static_cast<Eigen::Index>(i)) = batch[i]->obs.transpose();
            next_obs.row(static_cast<Eigen::Index>(i)) = batch[i]->next_obs.transpose();
            actions[static_cast<Eigen::Index>(i)] = batch[i]->action;
            rewards[static_cast<Eigen::Index>(i)] = batch[i]->reward;
          }
          const Matrix features = extractor->encode(obs);
          const Matrix next_features = extractor->encode(next_obs);
          const Vector targets = agent.compute_targets(rewards, next_features);
          const CriticLosses critic = agent.update_critics(features, actions, targets);
          require_finite(critic.q1, "Q1 loss");
          require_finite(critic.q2, "Q2 loss");
          require_finite(agent.update_value(features, rng), "value loss");
          require_finite(agent.update_policy(features, rng), "policy loss");
          // The agent's scores are a fixed target for the extractor.
          const Vector a_sac = agent.deterministic_actions(features);
          require_finite(extractor->update(obs, a_sac), "feature extractor loss");
          if (result.updates == 0) result.first_update_step = global;
          ++result.updates;
          if ((global + 1) % config.target_interval == 0) {
            agent.soft_update_target();
            ++result.soft_updates;
          }
        }
      } catch (...) {
        rethrow_with_context("episode " + std::to_string(episode) + ", step " + std::to_string(step));
      }
    }
    if (options.write_files) {
      TrainedModel snapshot(extractor->clone(), agent, scaler, config.canonical(false));
      Checkpoint ckpt = snapshot.to_checkpoint();
      ckpt.set_meta("seed", std::to_string(seed));
      ckpt.set_meta("episodes_done", std::to_string(episode + 1));
      write_text(result.checkpoint_path, ckpt.serialize());
    }
  }

  result.total_steps = global;
  result.counterfactual_calls = counterfactual_invocations() - cf_before;
  result.model = TrainedModel(std::move(extractor), std::move(agent), scaler, config.canonical(false));
  if (options.write_files && config.write_step_log) {
    write_text(result.step_log_path, step_log_csv(result.log));
  }
  return result;
}

TrainResult train(const RunConfig& config, std::uint64_t seed, const TrainOptions& options) {
  const Dataset data = load_config_dataset(config);
  const PreparedData prepared = prepare_data(data, config, seed);
  return train(config, prepared.regime, prepared.scaler, seed, options);
}

}  // namespace tricrlad
