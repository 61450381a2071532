#include "tricrlad/harness.hpp"
#include "tricrlad/trainer.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

using namespace tricrlad;

namespace {

RunConfig load_with_overrides(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig config = path.empty() ? RunConfig{} : RunConfig::load(path);
  for (const auto& o : overrides) config.apply_override(o);
  config.validate();
  return config;
}

void print_metrics(const RunMetrics& m) {
  for (const auto& s : m.seeds) {
    if (s.auc) {
      std::printf("seed %llu  auc %.4f\n", static_cast<unsigned long long>(s.seed), *s.auc);
    } else {
      std::printf("seed %llu  FAILED: %s\n", static_cast<unsigned long long>(s.seed), s.error.c_str());
    }
  }
  std::printf("%s  mean %.4f  std %.4f%s\n", m.experiment.c_str(), m.mean_auc, m.std_auc,
              m.partial ? "  (partial)" : "");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised anomaly detection with a causal soft actor-critic agent"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto add_config = [&](CLI::App* cmd, bool required) {
    auto* opt = cmd->add_option("--config", config_path, "Flat key = value config file");
    if (required) opt->required();
    cmd->add_option("--set", overrides, "Override a config key (key=value), repeatable");
  };

  auto* train_cmd = app.add_subcommand("train", "Train one seed and write checkpoint and step log");
  add_config(train_cmd, true);
  std::optional<std::uint64_t> seed;
  train_cmd->add_option("--seed", seed, "Seed (default: first entry of 'seeds')");

  auto* eval_cmd = app.add_subcommand("eval", "Score a labeled table with a checkpoint and report AUC");
  std::string ckpt_path;
  std::string data_path;
  std::string label_col = "label";
  std::string scores_out;
  eval_cmd->add_option("--checkpoint", ckpt_path)->required();
  eval_cmd->add_option("--data", data_path)->required();
  eval_cmd->add_option("--label-col", label_col);
  eval_cmd->add_option("--scores", scores_out, "Write per-point scores to this CSV");

  auto* exp_cmd = app.add_subcommand("experiment", "Train and evaluate every seed");
  add_config(exp_cmd, true);

  auto* ablate_cmd = app.add_subcommand("ablate", "Run the experiment with one ablation flag");
  add_config(ablate_cmd, true);
  std::string flag;
  ablate_cmd->add_option("--flag", flag, "fixed_threshold | simple_reward | no_causal")->required();

  auto* report_cmd = app.add_subcommand("report", "Summaries of a step log");
  std::string kind;
  std::string log_path;
  report_cmd->add_option("kind", kind, "diversity | threshold")
      ->required()
      ->check(CLI::IsMember({"diversity", "threshold"}));
  report_cmd->add_option("--log", log_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train_cmd) {
      const RunConfig config = load_with_overrides(config_path, overrides);
      const std::uint64_t s = seed.value_or(config.seeds.front());
      const TrainResult r = train(config, s);
      std::printf("steps %llu  updates %llu\ncheckpoint %s\nstep log %s\n",
                  static_cast<unsigned long long>(r.total_steps), static_cast<unsigned long long>(r.updates),
                  r.checkpoint_path.string().c_str(), r.step_log_path.string().c_str());
    } else if (*eval_cmd) {
      const TrainedModel model = TrainedModel::from_checkpoint(Checkpoint::load(ckpt_path));
      const RunConfig config = RunConfig::parse(model.config_text);
      LoadOptions opts;
      opts.delimiter = config.delimiter;
      opts.label_column = label_col;
      const Dataset data = load_table(data_path, opts);
      const auto scores = score_dataset(model, data);
      if (!scores_out.empty()) {
        FILE* f = std::fopen(scores_out.c_str(), "w");
        if (!f) throw DataError("cannot write '" + scores_out + "'");
        std::fprintf(f, "id,score\n");
        for (std::size_t i = 0; i < scores.size(); ++i) {
          std::fprintf(f, "%lld,%.17g\n", static_cast<long long>(data.points[i].id), scores[i]);
        }
        std::fclose(f);
      }
      std::printf("auc %.6f  (%zu points)\n", auc_roc(scores, data.labels()), scores.size());
    } else if (*exp_cmd || *ablate_cmd) {
      RunConfig config = load_with_overrides(config_path, overrides);
      if (*ablate_cmd) apply_ablation(config, flag);
      const RunMetrics m = run_experiment(config);
      print_metrics(m);
      if (m.partial) return 3;
    } else if (*report_cmd) {
      const auto log = load_step_log(log_path);
      std::cout << (kind == "diversity" ? diversity_report(log) : threshold_report(log));
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
