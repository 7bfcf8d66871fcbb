#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ltmx/aggregation.hpp"
#include "ltmx/data/augment.hpp"
#include "ltmx/data/synthetic.hpp"
#include "ltmx/data/types.hpp"
#include "ltmx/model.hpp"
#include "ltmx/training.hpp"

namespace ltmx {

enum class SourceType { synthetic_digits, idx, svhn_mat, lesion_images, lesion_metadata };

struct SourceConfig {
  std::string name;
  SourceType type = SourceType::synthetic_digits;
  DigitSourceConfig digits;
  LesionSourceConfig lesion;
  std::string images;  // idx image file
  std::string labels;  // idx label file
  std::string path;    // svhn .mat file
  bool operator==(const SourceConfig&) const = default;
};

// How the paired pool turns into train and test splits.
enum class SplitMode {
  // Disjoint per-class train and test pools; every split is subsampled from
  // its pool with its own distribution spec.
  pools,
  // The long-tailed subset is split per class, so train and test share one
  // distribution (the only test split is "matched").
  stratified,
};

struct DatasetConfig {
  int num_classes = 10;
  // Seed of the procedural sources; fixed across repetitions.
  std::uint64_t source_seed = 7;
  std::vector<SourceConfig> sources;
  SplitMode split = SplitMode::pools;
  // pools: fraction of each class reserved for the test pool.
  double test_pool_fraction = 0.3;
  // stratified: fraction of each class kept for training.
  double train_fraction = 0.8;
  // Head class size of the train split (0 = largest feasible).
  std::int64_t head_count = 0;
  // Head class size of every test split (0 = largest feasible).
  std::int64_t test_head_count = 0;
  bool operator==(const DatasetConfig&) const = default;
};

enum class Variant { proposed, no_tcp, single_modality };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

struct ModelSection {
  ImageEncoderConfig image;
  TabularEncoderConfig tabular;
  int head_width = 128;
  double init_std = 1e-3;
  bool separate_expert_encoders = false;
  // Modality kept by the single_modality variant.
  int single_modality_index = 0;
  bool operator==(const ModelSection&) const = default;
};

enum class CaseKind { case1, case2 };

struct GridConfig {
  std::vector<DistributionSpec> train;
  std::vector<Variant> variants;
  bool operator==(const GridConfig&) const = default;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "runs";
  CaseKind case_kind = CaseKind::case1;
  DatasetConfig dataset;
  DistributionSpec train{SplitKind::forward, 10.0};
  std::vector<DistributionSpec> tests;
  Variant variant = Variant::proposed;
  ModelSection model;
  TrainConfig optimizer;
  AdaptConfig adaptation;
  AugmentConfig augment;
  GridConfig grid;
  bool operator==(const ExperimentConfig&) const = default;

  // Test split ids ("matched" for the stratified mode).
  std::vector<std::string> test_split_ids() const;
  // Seeds of the repetitions (just `seed` when `seeds` is empty).
  std::vector<std::uint64_t> repetition_seeds() const;
};

// Throws ConfigError with the offending field path.
void validate(const ExperimentConfig& config);

ExperimentConfig parse_config(const std::string& yaml_text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& config);
std::string config_to_json(const ExperimentConfig& config);

// Instantiate the configured sources, in order.
std::vector<std::unique_ptr<LabeledSource>> build_sources(const DatasetConfig& config);

// Architecture for a variant given the dataset's modality shapes.
ModelConfig model_config_for(const ExperimentConfig& config, const std::vector<ModalityShape>& shapes, Variant variant);
// Modalities kept by a variant.
std::vector<std::size_t> variant_modalities(const ExperimentConfig& config, std::size_t num_modalities, Variant variant);

}  // namespace ltmx
