#pragma once

#include "tricrlad/adie.hpp"
#include "tricrlad/cfe.hpp"
#include "tricrlad/dataset.hpp"
#include "tricrlad/iforest.hpp"
#include "tricrlad/sac.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tricrlad {

struct AblationFlags {
  bool fixed_threshold = false;
  bool simple_reward = false;
  bool no_causal = false;

  bool any() const { return fixed_threshold || simple_reward || no_causal; }
  // "full" or a '+'-joined list such as "fixed_threshold+no_causal".
  std::string tag() const;
};

// Every tunable of a run. Persisted as flat `key = value` text; see
// RunConfig::keys() for the full list.
struct RunConfig {
  // data and regime
  std::string data_path;
  std::string dataset_name;
  std::string label_column = "label";
  char delimiter = ',';
  double test_fraction = 0.2;
  double anomalies_ratio = 0.1;
  double contamination_ratio = 0.1;
  ContaminationBase contamination_base = ContaminationBase::Unlabeled;
  ShortfallPolicy regime_shortfall = ShortfallPolicy::DownsampleNormals;
  bool allow_unlabeled = false;

  // environment; a negative ratio_target means "use contamination_ratio"
  EnvConfig env;
  double ratio_target = -1.0;
  IsolationForestConfig iforest;

  // feature extractor and agent
  CfeConfig cfe;
  std::size_t encoder_hidden = 64;
  SacConfig sac;
  std::size_t batch_size = 64;
  std::size_t replay_capacity = 100000;
  std::size_t warmup_steps = 5000;
  std::size_t warmup_size = 10000;
  std::size_t target_interval = 20;

  // schedule and output
  std::size_t episodes = 10;
  std::size_t steps_per_episode = 5000;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  AblationFlags ablation;
  bool reset_pools_per_episode = false;
  std::string output_dir = "runs";
  std::size_t jobs = 1;
  bool write_step_log = true;

  static const std::vector<std::string>& keys();

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  // "key=value" override as passed to --set.
  void apply_override(const std::string& assignment);

  // Parses `key = value` lines; '#' starts a comment.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  // Keys, sorted, one `key = value` per line. Without runtime keys the text
  // omits output_dir, jobs and step_log, which never affect results.
  std::string canonical(bool include_runtime = true) const;
  // FNV-1a 64 of canonical(false), as 16 hex digits.
  std::string hash() const;
  static bool is_runtime_key(const std::string& key);

  // Environment config with schedule, ablation and ratio_target resolved.
  EnvConfig resolved_env() const;
  std::string run_name(std::uint64_t seed) const;
  std::string experiment_name() const;

  void validate() const;
};

std::string fnv1a_hex(const std::string& text);

}  // namespace tricrlad
