#include "tricrlad/harness.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace tricrlad {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace

double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw UsageError("auc_roc: " + std::to_string(scores.size()) + " scores vs " +
                     std::to_string(labels.size()) + " labels");
  }
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw UsageError("auc_roc: labels must be 0/1");
    if (std::isnan(scores[i])) throw NumericalError("auc_roc: NaN score");
    n_pos += static_cast<std::size_t>(labels[i]);
  }
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("auc_roc: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of (1-based, tie-averaged) ranks of the positives, kept doubled so
  // every quantity stays an exact integer.
  std::uint64_t doubled_rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t doubled_avg_rank = (i + 1) + j;  // 2 * (i+1 + j) / 2
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] == 1) doubled_rank_sum += doubled_avg_rank;
    }
    i = j;
  }
  const std::uint64_t doubled_u = doubled_rank_sum - static_cast<std::uint64_t>(n_pos) * (n_pos + 1);
  return static_cast<double>(doubled_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<double> score_dataset(const TrainedModel& model, const Dataset& data) {
  if (!model.extractor) throw UsageError("score_dataset: model has no feature extractor");
  const std::size_t dim = model.extractor->input_dim();
  if (data.dim != dim) {
    throw DataError("score_dataset: data has " + std::to_string(data.dim) + " features, model expects " +
                    std::to_string(dim));
  }
  std::vector<double> out;
  out.reserve(data.size());
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, data.size() - start);
    Matrix obs(n, dim);
    for (std::size_t i = 0; i < n; ++i) {
      obs.row(static_cast<Eigen::Index>(i)) = model.scaler.transform(data.points[start + i].features).transpose();
    }
    const Vector scores = model.agent.deterministic_actions(model.extractor->encode(obs));
    for (Eigen::Index i = 0; i < scores.size(); ++i) out.push_back(scores[i]);
  }
  return out;
}

std::pair<double, double> mean_std(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / n)};
}

std::string RunMetrics::to_json() const {
  nlohmann::json j;
  j["experiment"] = experiment;
  j["config_hash"] = config_hash;
  j["mean_auc"] = mean_auc;
  j["std_auc"] = std_auc;
  j["partial"] = partial;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : seeds) {
    nlohmann::json row;
    row["seed"] = s.seed;
    row["auc"] = s.auc ? nlohmann::json(*s.auc) : nlohmann::json(nullptr);
    row["error"] = s.error;
    row["checkpoint"] = s.checkpoint.filename().string();
    row["step_log"] = s.step_log.filename().string();
    rows.push_back(row);
  }
  j["seeds"] = rows;
  return j.dump(2) + "\n";
}

std::string RunMetrics::to_csv() const {
  std::ostringstream out;
  out << "experiment,seed,auc,status\n";
  for (const auto& s : seeds) {
    out << experiment << ',' << s.seed << ',' << (s.auc ? fmt(*s.auc) : std::string()) << ','
        << (s.error.empty() ? "ok" : "failed") << '\n';
  }
  out << experiment << ",mean," << fmt(mean_auc) << ',' << (partial ? "partial" : "ok") << '\n';
  out << experiment << ",std," << fmt(std_auc) << ',' << (partial ? "partial" : "ok") << '\n';
  return out.str();
}

std::string RunMetrics::timing_json() const {
  nlohmann::json j;
  j["experiment"] = experiment;
  j["runtime_seconds"] = runtime_seconds;
  nlohmann::json per_seed = nlohmann::json::object();
  for (const auto& s : seeds) per_seed[std::to_string(s.seed)] = s.runtime_seconds;
  j["seed_runtime_seconds"] = per_seed;
  return j.dump(2) + "\n";
}

RunMetrics run_experiment(const RunConfig& config, const Dataset& data, const ExperimentOptions& options) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  RunMetrics metrics;
  metrics.experiment = config.experiment_name();
  metrics.config_hash = config.hash();
  metrics.seeds.resize(config.seeds.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < config.seeds.size(); i = next++) {
      SeedResult& out = metrics.seeds[i];
      out.seed = config.seeds[i];
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const PreparedData prepared = prepare_data(data, config, out.seed);
        TrainOptions topts;
        topts.write_files = options.write_files;
        topts.check_invariants = options.check_invariants;
        const TrainResult result = train(config, prepared.regime, prepared.scaler, out.seed, topts);
        out.auc = auc_roc(score_dataset(result.model, prepared.test_raw), prepared.test_raw.labels());
        out.checkpoint = result.checkpoint_path;
        out.step_log = result.step_log_path;
      } catch (const std::exception& e) {
        out.error = e.what();
      }
      out.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  };
  const std::size_t n_threads = std::min(config.jobs, config.seeds.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<double> aucs;
  for (const auto& s : metrics.seeds) {
    if (s.auc) {
      aucs.push_back(*s.auc);
    } else {
      metrics.partial = true;
    }
  }
  std::tie(metrics.mean_auc, metrics.std_auc) = mean_std(aucs);
  metrics.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (options.write_files) write_metrics(metrics, config.output_dir);
  return metrics;
}

RunMetrics run_experiment(const RunConfig& config, const ExperimentOptions& options) {
  return run_experiment(config, load_config_dataset(config), options);
}

void write_metrics(const RunMetrics& metrics, const std::filesystem::path& output_dir) {
  const auto base = output_dir / metrics.experiment;
  write_file(base.string() + ".metrics.json", metrics.to_json());
  write_file(base.string() + ".metrics.csv", metrics.to_csv());
  write_file(base.string() + ".timing.json", metrics.timing_json());
}

std::map<std::uint64_t, std::uint64_t> diversity_histogram(const std::vector<StepRecord>& log) {
  if (log.empty()) throw DataError("diversity report: empty step log");
  std::map<std::int64_t, std::uint64_t> visits;
  for (const auto& r : log) {
    if (r.pool == Pool::U) ++visits[r.id];
  }
  std::map<std::uint64_t, std::uint64_t> histogram;
  for (const auto& [id, count] : visits) ++histogram[count];
  return histogram;
}

std::string diversity_report(const std::vector<StepRecord>& log) {
  std::ostringstream out;
  out << "visits,points\n";
  for (const auto& [visits, points] : diversity_histogram(log)) out << visits << ',' << points << '\n';
  return out.str();
}

std::string threshold_report(const std::vector<StepRecord>& log) {
  if (log.empty()) throw DataError("threshold report: empty step log");
  std::ostringstream out;
  out << "global_step,episode,step,th\n";
  for (std::size_t i = 0; i < log.size(); ++i) {
    if (i == 0 || log[i].th != log[i - 1].th) {
      out << i << ',' << log[i].episode << ',' << log[i].step << ',' << fmt(log[i].th) << '\n';
    }
  }
  return out.str();
}

double iforest_reference_auc(const PreparedData& prepared, const IsolationForestConfig& config,
                             std::uint64_t seed) {
  const Dataset train = prepared.scaler.transform(prepared.train_raw);
  const auto forest = IsolationForest::fit(train.feature_matrix(), config, derive_seed(seed, 404));
  const Dataset test = prepared.scaler.transform(prepared.test_raw);
  const Vector scores = forest.score_all(test.feature_matrix());
  return auc_roc(std::vector<double>(scores.data(), scores.data() + scores.size()), test.labels());
}

}  // namespace tricrlad
