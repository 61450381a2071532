#pragma once

// Evaluation and experiment driver: AUC-ROC, scoring, multi-seed runs,
// metrics files and step-log reports.

#include "tricrlad/config.hpp"
#include "tricrlad/dataset.hpp"
#include "tricrlad/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace tricrlad {

// Probability that a random anomaly (label 1) outscores a random normal,
// ties counting 1/2, computed from average ranks.
double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels);

// Deterministic policy action on the extractor features of each scaled raw
// point, aligned with data.points.
std::vector<double> score_dataset(const TrainedModel& model, const Dataset& data);

struct SeedResult {
  std::uint64_t seed = 0;
  std::optional<double> auc;
  std::string error;  // non-empty when the seed failed
  double runtime_seconds = 0.0;
  std::filesystem::path checkpoint;
  std::filesystem::path step_log;
};

struct RunMetrics {
  std::string experiment;
  std::string config_hash;
  std::vector<SeedResult> seeds;
  double mean_auc = 0.0;
  double std_auc = 0.0;  // population standard deviation over successful seeds
  bool partial = false;  // at least one seed failed
  double runtime_seconds = 0.0;

  // Deterministic files: runtime is excluded so they are byte-reproducible.
  std::string to_json() const;
  std::string to_csv() const;
  // Wall-clock timing, kept apart from the reproducible files.
  std::string timing_json() const;
};

// Mean and population standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& values);

struct ExperimentOptions {
  bool write_files = true;
  bool check_invariants = true;
};

// Trains every seed (config.jobs at a time), scores the held-out test split
// and aggregates; failures of individual seeds are recorded, not thrown.
RunMetrics run_experiment(const RunConfig& config, const Dataset& data,
                          const ExperimentOptions& options = {});
RunMetrics run_experiment(const RunConfig& config, const ExperimentOptions& options = {});

void write_metrics(const RunMetrics& metrics, const std::filesystem::path& output_dir);

// visit count -> number of distinct points with that many U-pool visits.
std::map<std::uint64_t, std::uint64_t> diversity_histogram(const std::vector<StepRecord>& log);
std::string diversity_report(const std::vector<StepRecord>& log);

// One row per threshold change point: global step and TH from then on.
std::string threshold_report(const std::vector<StepRecord>& log);

// Unsupervised reference: isolation forest fitted on the whole scaled
// training split without labels, AUC on the scaled test split.
double iforest_reference_auc(const PreparedData& prepared, const IsolationForestConfig& config,
                             std::uint64_t seed);

}  // namespace tricrlad
