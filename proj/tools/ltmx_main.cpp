// Command line front end: prepare-data, train, adapt, evaluate, report.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "ltmx/config.hpp"
#include "ltmx/error.hpp"
#include "ltmx/pipeline.hpp"

namespace {

void log_line(const std::string& msg) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%H:%M:%S", std::localtime(&now));
  std::cerr << '[' << stamp << "] " << msg << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Long-tailed multi-modal experts: data preparation, training, weight learning and evaluation"};
  app.require_subcommand(1);

  std::string config_path;
  std::int64_t seed = -1;
  std::string out;
  int parallel_reps = 1;
  bool quiet = false;
  app.add_option("--config", config_path, "Experiment config (YAML)")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Override the config seed")->check(CLI::NonNegativeNumber);
  app.add_option("--out", out, "Override the output directory");
  app.add_option("--parallel-reps", parallel_reps, "Seed repetitions run concurrently (report)")
      ->check(CLI::PositiveNumber);
  app.add_flag("-q,--quiet", quiet, "Only print errors");

  auto* prepare = app.add_subcommand("prepare-data", "Write train and test manifests");
  auto* train = app.add_subcommand("train", "Train the experts and write a checkpoint");
  bool resume = false;
  train->add_flag("--resume", resume, "Continue from the checkpoint in the output directory");

  auto* adapt = app.add_subcommand("adapt", "Learn aggregation weights for a split");
  std::string checkpoint;
  std::string split;
  adapt->add_option("--checkpoint", checkpoint, "Checkpoint (default: <out>/checkpoint.ltmx)");
  adapt->add_option("--split", split, "Split id, e.g. backward-50 or matched")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint and weights on test splits");
  std::vector<std::string> splits;
  std::vector<std::string> weight_args;
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint (default: <out>/checkpoint.ltmx)");
  evaluate->add_option("--split", splits, "Split ids (default: every configured test split)");
  evaluate->add_option("--weights", weight_args, "split=path overrides for weights files");

  auto* report = app.add_subcommand("report", "Run the configured grid end to end and summarize");
  bool dump_config = false;
  report->add_flag("--dump-config", dump_config, "Print the resolved config as JSON and exit");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto config = ltmx::load_config(config_path);
    ltmx::CommandOptions options;
    if (seed >= 0) options.seed = static_cast<std::uint64_t>(seed);
    if (!out.empty()) options.out = out;
    options.parallel_reps = parallel_reps;
    if (!quiet) options.log = log_line;

    if (*prepare) {
      ltmx::cmd_prepare_data(config, options);
    } else if (*train) {
      ltmx::cmd_train(config, options, resume);
    } else if (*adapt) {
      ltmx::cmd_adapt(config, options, checkpoint, split);
    } else if (*evaluate) {
      std::map<std::string, std::string> weights;
      for (const auto& w : weight_args) {
        const auto eq = w.find('=');
        if (eq == std::string::npos) throw ltmx::ConfigError("--weights expects split=path, got '" + w + "'");
        weights[w.substr(0, eq)] = w.substr(eq + 1);
      }
      ltmx::cmd_evaluate(config, options, checkpoint, weights, splits);
    } else if (*report) {
      if (dump_config) {
        std::cout << ltmx::config_to_json(config);
        return 0;
      }
      const auto result = ltmx::cmd_report(config, options);
      for (const auto& f : result.failures) std::cerr << "failed: " << f << '\n';
      if (!result.failures.empty()) return 3;
    }
  } catch (const ltmx::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
