#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ltmx/aggregation.hpp"
#include "ltmx/config.hpp"
#include "ltmx/data/manifest.hpp"
#include "ltmx/metrics.hpp"

namespace ltmx {

using Logger = std::function<void(const std::string&)>;

struct CommandOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  int parallel_reps = 1;
  Logger log;
};

// File layout of one run directory.
struct RunPaths {
  std::filesystem::path dir;

  std::filesystem::path train_manifest() const { return dir / "train.manifest"; }
  std::filesystem::path test_manifest(const std::string& split) const { return dir / ("test-" + split + ".manifest"); }
  // Manifest of a split id; "train" names the training split.
  std::filesystem::path split_manifest(const std::string& split) const {
    return split == "train" ? train_manifest() : test_manifest(split);
  }
  std::filesystem::path checkpoint() const { return dir / "checkpoint.ltmx"; }
  std::filesystem::path trace() const { return dir / "trace.csv"; }
  std::filesystem::path weights(const std::string& split) const { return dir / ("weights-" + split + ".txt"); }
  std::filesystem::path adapt_trace(const std::string& split) const { return dir / ("adapt-" + split + ".csv"); }
  std::filesystem::path results() const { return dir / "results.csv"; }
  std::filesystem::path summary() const { return dir / "summary.csv"; }
};

struct SplitManifests {
  Manifest train;
  std::map<std::string, Manifest> tests;  // keyed by split id
};

// Pair the sources, carve out train and test pools and subsample every split.
SplitManifests build_manifests(const ExperimentConfig& config, const std::vector<const LabeledSource*>& sources,
                               const DistributionSpec& train_spec, std::uint64_t seed);

// Sources built from the config, kept alive alongside raw pointers.
struct SourceSet {
  std::vector<std::unique_ptr<LabeledSource>> owned;
  std::vector<const LabeledSource*> ptrs() const;
  std::vector<ModalityShape> shapes() const;
};
SourceSet open_sources(const ExperimentConfig& config);

// Trains one variant from the manifest in `data_dir` and writes the
// checkpoint and loss trace into `run_dir`. With resume set, an existing
// checkpoint there is continued rather than replaced.
void train_run(const ExperimentConfig& config, const SourceSet& sources, const std::filesystem::path& data_dir,
               const std::filesystem::path& run_dir, Variant variant, std::uint64_t seed, bool resume,
               const Logger& log = {});

// Learns aggregation weights for one split and writes the weights file and
// objective trace. Returns the weights.
AggregationWeights adapt_run(const ExperimentConfig& config, const SourceSet& sources,
                             const std::filesystem::path& data_dir, const std::filesystem::path& checkpoint,
                             const std::filesystem::path& run_dir, const std::string& split, std::uint64_t seed,
                             const Logger& log = {});

// Metrics of a checkpoint plus weights on one split.
EvalRecord evaluate_run(const ExperimentConfig& config, const SourceSet& sources, const std::filesystem::path& data_dir,
                        const std::filesystem::path& checkpoint, const std::filesystem::path& weights,
                        const std::string& split, std::uint64_t seed);

// Command entry points; all return normally on success and throw on error.
void cmd_prepare_data(const ExperimentConfig& config, const CommandOptions& options);
void cmd_train(const ExperimentConfig& config, const CommandOptions& options, bool resume);
void cmd_adapt(const ExperimentConfig& config, const CommandOptions& options, const std::string& checkpoint,
               const std::string& split);
void cmd_evaluate(const ExperimentConfig& config, const CommandOptions& options, const std::string& checkpoint,
                  const std::map<std::string, std::string>& weights, const std::vector<std::string>& splits);

struct ReportResult {
  std::vector<EvalRecord> records;
  std::vector<EvalReport> summary;
  std::vector<std::string> failures;
};

// Expands the grid (train spec x variant x seed), runs every cell end to end
// and writes results.csv, summary.csv and plots under the output directory.
ReportResult cmd_report(const ExperimentConfig& config, const CommandOptions& options);

}  // namespace ltmx
