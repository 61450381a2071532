#pragma once

// Training loop: episodes of environment interaction, warm-up, per-step
// minibatch updates of the agent and the feature extractor, periodic soft
// target updates and per-episode checkpoints.

#include "tricrlad/adie.hpp"
#include "tricrlad/cfe.hpp"
#include "tricrlad/checkpoint.hpp"
#include "tricrlad/config.hpp"
#include "tricrlad/dataset.hpp"
#include "tricrlad/sac.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace tricrlad {

// Training data prepared for one seed: raw split, scaler fitted on the
// training part and the A/U/test regime built from the scaled data.
struct PreparedData {
  Dataset train_raw;
  Dataset test_raw;
  MinMaxScaler scaler;
  RegimeSplit regime;
};

PreparedData prepare_data(const Dataset& data, const RunConfig& config, std::uint64_t seed);
Dataset load_config_dataset(const RunConfig& config);

std::unique_ptr<FeatureExtractor> make_extractor(const RunConfig& config, std::size_t dim,
                                                 std::uint64_t seed);

// Everything needed to score raw observations.
struct TrainedModel {
  TrainedModel(std::unique_ptr<FeatureExtractor> extractor, Agent agent, MinMaxScaler scaler,
               std::string config_text);

  TrainedModel(const TrainedModel& other);
  TrainedModel& operator=(const TrainedModel& other);
  TrainedModel(TrainedModel&&) noexcept = default;
  TrainedModel& operator=(TrainedModel&&) noexcept = default;

  std::unique_ptr<FeatureExtractor> extractor;
  Agent agent;
  MinMaxScaler scaler;
  std::string config_text;

  Checkpoint to_checkpoint() const;
  static TrainedModel from_checkpoint(const Checkpoint& ckpt);
};

struct StepRecord {
  std::uint32_t episode = 0;
  std::uint32_t step = 0;
  Pool pool = Pool::U;
  std::int64_t id = 0;
  double action = 0.0;
  double th = 0.0;
  double reward = 0.0;
};

std::string step_log_csv(const std::vector<StepRecord>& records);
std::vector<StepRecord> parse_step_log(const std::string& text);
std::vector<StepRecord> load_step_log(const std::filesystem::path& path);

struct TrainOptions {
  // Check the pool and confidence invariants after every step.
  bool check_invariants = true;
  // Write checkpoint and step log files to config.output_dir.
  bool write_files = true;
};

struct TrainResult {
  TrainedModel model;
  std::vector<StepRecord> log;
  std::uint64_t total_steps = 0;
  std::uint64_t updates = 0;
  // Global step index of the first parameter update, or total_steps if none.
  std::uint64_t first_update_step = 0;
  std::uint64_t soft_updates = 0;
  std::uint64_t counterfactual_calls = 0;
  std::filesystem::path checkpoint_path;
  std::filesystem::path step_log_path;
};

// Fails with UsageError on an unknown flag name.
void apply_ablation(RunConfig& config, const std::string& flag);

TrainResult train(const RunConfig& config, const RegimeSplit& regime, const MinMaxScaler& scaler,
                  std::uint64_t seed, const TrainOptions& options = {});
TrainResult train(const RunConfig& config, std::uint64_t seed, const TrainOptions& options = {});

std::filesystem::path checkpoint_path(const RunConfig& config, std::uint64_t seed);
std::filesystem::path step_log_path(const RunConfig& config, std::uint64_t seed);

}  // namespace tricrlad
