#include "tricrlad/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace tricrlad {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Prefer the shortest representation that round-trips.
  for (int precision = 1; precision <= 17; ++precision) {
    char candidate[64];
    std::snprintf(candidate, sizeof candidate, "%.*g", precision, v);
    if (std::strtod(candidate, nullptr) == v) return candidate;
  }
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || errno != 0 || end != v.c_str() + v.size()) {
    throw UsageError("config: key '" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const unsigned long long out = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || v[0] == '-' || errno != 0 || end != v.c_str() + v.size()) {
    throw UsageError("config: key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(to_u64(key, v));
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError("config: key '" + key + "' expects a boolean, got '" + v + "'");
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

template <typename T, typename Parse>
std::vector<T> to_list(const std::string& v, Parse parse) {
  std::vector<T> out;
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse(item));
  }
  return out;
}

template <typename T>
std::string from_list(const std::vector<T>& items) {
  std::ostringstream out;
  for (std::size_t i = 0; i < items.size(); ++i) out << (i ? "," : "") << items[i];
  return out.str();
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define TRI_DOUBLE(name, member)                                                          \
  {                                                                                       \
    name, Field {                                                                         \
      [](const RunConfig& c) { return fmt_double(c.member); },                            \
          [](RunConfig& c, const std::string& v) { c.member = to_double(name, v); }       \
    }                                                                                     \
  }
#define TRI_SIZE(name, member)                                                            \
  {                                                                                       \
    name, Field {                                                                         \
      [](const RunConfig& c) { return std::to_string(c.member); },                        \
          [](RunConfig& c, const std::string& v) { c.member = to_size(name, v); }         \
    }                                                                                     \
  }
#define TRI_BOOL(name, member)                                                            \
  {                                                                                       \
    name, Field {                                                                         \
      [](const RunConfig& c) { return from_bool(c.member); },                             \
          [](RunConfig& c, const std::string& v) { c.member = to_bool(name, v); }         \
    }                                                                                     \
  }
#define TRI_STRING(name, member)                                                          \
  {                                                                                       \
    name, Field {                                                                         \
      [](const RunConfig& c) { return c.member; },                                        \
          [](RunConfig& c, const std::string& v) { c.member = v; }                        \
    }                                                                                     \
  }

const std::map<std::string, Field>& registry() {
  static const std::map<std::string, Field> fields = {
      TRI_STRING("data", data_path),
      TRI_STRING("dataset_name", dataset_name),
      TRI_STRING("label_col", label_column),
      {"delimiter", Field{[](const RunConfig& c) {
                            return c.delimiter == '\t' ? std::string("tab") : std::string(1, c.delimiter);
                          },
                          [](RunConfig& c, const std::string& v) {
                            if (v == "tab" || v == "\\t") {
                              c.delimiter = '\t';
                            } else if (v.size() == 1) {
                              c.delimiter = v[0];
                            } else {
                              throw UsageError("config: delimiter must be one character or 'tab'");
                            }
                          }}},
      TRI_DOUBLE("test_fraction", test_fraction),
      TRI_DOUBLE("anomalies_ratio", anomalies_ratio),
      TRI_DOUBLE("contamination_ratio", contamination_ratio),
      {"contamination_base",
       Field{[](const RunConfig& c) {
               return std::string(c.contamination_base == ContaminationBase::Train ? "train" : "unlabeled");
             },
             [](RunConfig& c, const std::string& v) { c.contamination_base = parse_contamination_base(v); }}},
      {"regime_shortfall",
       Field{[](const RunConfig& c) {
               return std::string(c.regime_shortfall == ShortfallPolicy::Error ? "error" : "downsample_normals");
             },
             [](RunConfig& c, const std::string& v) { c.regime_shortfall = parse_shortfall_policy(v); }}},
      TRI_BOOL("allow_unlabeled", allow_unlabeled),

      TRI_DOUBLE("p_a", env.p_a),
      TRI_DOUBLE("p_t", env.p_t),
      TRI_DOUBLE("p_u", env.p_u),
      TRI_DOUBLE("th_init", env.th_init),
      {"tc_max", Field{[](const RunConfig& c) { return std::to_string(c.env.tc_max); },
                       [](RunConfig& c, const std::string& v) { c.env.tc_max = static_cast<int>(to_u64("tc_max", v)); }}},
      TRI_DOUBLE("ratio_target", ratio_target),
      TRI_SIZE("th_interval", env.th_interval),
      TRI_SIZE("history_window", env.history_window),
      TRI_SIZE("decision_window", env.decision_window),
      TRI_DOUBLE("alpha_bias", env.alpha_bias),
      TRI_SIZE("candidate_cap", env.candidate_cap),
      TRI_DOUBLE("th_min", env.th_min),
      TRI_DOUBLE("th_max", env.th_max),
      TRI_DOUBLE("factor_min", env.factor_min),
      TRI_DOUBLE("factor_max", env.factor_max),
      TRI_BOOL("tc_pool_mean_increment", env.tc_pool_mean_increment),
      TRI_BOOL("history_valuable_only", env.history_valuable_only),
      TRI_BOOL("u_reward_gated", env.u_reward_gated),
      TRI_BOOL("iforest_centered", env.iforest_centered),
      TRI_SIZE("iforest_trees", iforest.n_trees),
      TRI_SIZE("iforest_subsample", iforest.subsample),

      TRI_SIZE("token_width", cfe.token_width),
      TRI_SIZE("feature_width", cfe.feature_width),
      TRI_DOUBLE("asym_tau", cfe.asym_tau),
      TRI_DOUBLE("mmd_min_bandwidth", cfe.min_bandwidth),
      TRI_DOUBLE("cfe_lr", cfe.lr),
      TRI_SIZE("encoder_hidden", encoder_hidden),

      {"hidden_layers",
       Field{[](const RunConfig& c) { return from_list(c.sac.hidden); },
             [](RunConfig& c, const std::string& v) {
               c.sac.hidden = to_list<std::size_t>(v, [](const std::string& s) { return to_size("hidden_layers", s); });
             }}},
      TRI_DOUBLE("actor_lr", sac.actor_lr),
      TRI_DOUBLE("critic_lr", sac.critic_lr),
      TRI_DOUBLE("value_lr", sac.value_lr),
      TRI_DOUBLE("alpha_ent", sac.alpha_ent),
      TRI_DOUBLE("gamma", sac.gamma),
      TRI_DOUBLE("target_tau", sac.target_tau),
      TRI_DOUBLE("grad_clip", sac.grad_clip),
      TRI_DOUBLE("log_std_min", sac.log_std_min),
      TRI_DOUBLE("log_std_max", sac.log_std_max),
      TRI_SIZE("batch_size", batch_size),
      TRI_SIZE("replay_capacity", replay_capacity),
      TRI_SIZE("warmup_steps", warmup_steps),
      TRI_SIZE("warmup_size", warmup_size),
      TRI_SIZE("target_interval", target_interval),

      TRI_SIZE("episodes", episodes),
      TRI_SIZE("steps_per_episode", steps_per_episode),
      {"seeds", Field{[](const RunConfig& c) { return from_list(c.seeds); },
                      [](RunConfig& c, const std::string& v) {
                        c.seeds = to_list<std::uint64_t>(v, [](const std::string& s) { return to_u64("seeds", s); });
                      }}},
      TRI_BOOL("fixed_threshold", ablation.fixed_threshold),
      TRI_BOOL("simple_reward", ablation.simple_reward),
      TRI_BOOL("no_causal", ablation.no_causal),
      TRI_BOOL("reset_pools_per_episode", reset_pools_per_episode),
      TRI_STRING("output_dir", output_dir),
      TRI_SIZE("jobs", jobs),
      TRI_BOOL("step_log", write_step_log),
  };
  return fields;
}

#undef TRI_DOUBLE
#undef TRI_SIZE
#undef TRI_BOOL
#undef TRI_STRING

}  // namespace

std::string AblationFlags::tag() const {
  std::vector<std::string> parts;
  if (fixed_threshold) parts.emplace_back("fixed_threshold");
  if (simple_reward) parts.emplace_back("simple_reward");
  if (no_causal) parts.emplace_back("no_causal");
  if (parts.empty()) return "full";
  std::string out = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) out += "+" + parts[i];
  return out;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [k, _] : registry()) out.push_back(k);
    return out;
  }();
  return names;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = registry().find(key);
  if (it == registry().end()) throw UsageError("config: unknown key '" + key + "'");
  it->second.set(*this, value);
}

std::string RunConfig::get(const std::string& key) const {
  auto it = registry().find(key);
  if (it == registry().end()) throw UsageError("config: unknown key '" + key + "'");
  return it->second.get(*this);
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const UsageError& e) {
      throw UsageError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

bool RunConfig::is_runtime_key(const std::string& key) {
  return key == "output_dir" || key == "jobs" || key == "step_log";
}

std::string RunConfig::canonical(bool include_runtime) const {
  std::ostringstream out;
  for (const auto& [k, field] : registry()) {
    if (include_runtime || !is_runtime_key(k)) out << k << " = " << field.get(*this) << "\n";
  }
  return out.str();
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string RunConfig::hash() const { return fnv1a_hex(canonical(false)); }

EnvConfig RunConfig::resolved_env() const {
  EnvConfig e = env;
  e.ratio_target = ratio_target < 0.0 ? contamination_ratio : ratio_target;
  e.steps_per_episode = steps_per_episode;
  e.fixed_threshold = ablation.fixed_threshold;
  e.simple_reward = ablation.simple_reward;
  return e;
}

std::string RunConfig::experiment_name() const {
  std::string name = dataset_name;
  if (name.empty()) name = data_path.empty() ? "dataset" : std::filesystem::path(data_path).stem().string();
  return name + "_" + ablation.tag();
}

std::string RunConfig::run_name(std::uint64_t seed) const {
  return experiment_name() + "_seed" + std::to_string(seed);
}

void RunConfig::validate() const {
  if (episodes < 1) throw UsageError("config: episodes must be >= 1");
  if (steps_per_episode < 1) throw UsageError("config: steps_per_episode must be >= 1");
  if (seeds.empty()) throw UsageError("config: seeds must not be empty");
  if (batch_size < 1) throw UsageError("config: batch_size must be >= 1");
  if (replay_capacity < batch_size) throw UsageError("config: replay_capacity must be >= batch_size");
  if (target_interval < 1) throw UsageError("config: target_interval must be >= 1");
  if (jobs < 1) throw UsageError("config: jobs must be >= 1");
  if (sac.target_tau < 0 || sac.target_tau > 1) throw UsageError("config: target_tau must lie in [0, 1]");
  if (cfe.asym_tau <= 0 || cfe.asym_tau >= 1) throw UsageError("config: asym_tau must lie in (0, 1)");
  resolved_env().validate();
}

}  // namespace tricrlad
