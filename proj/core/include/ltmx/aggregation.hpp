#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ltmx/data/augment.hpp"
#include "ltmx/data/types.hpp"
#include "ltmx/losses.hpp"
#include "ltmx/model.hpp"
#include "ltmx/nn/adam.hpp"

namespace ltmx {

using Theta = Eigen::Vector3d;

// Simplex weights over the three experts, w = softmax(theta).
struct AggregationWeights {
  Theta theta = Theta::Zero();

  std::array<double, kNumExperts> w() const;
  double operator[](int j) const { return w()[static_cast<std::size_t>(j)]; }
  // Index of the largest weight; the lowest index wins ties.
  int argmax() const;
  // theta = log(w); every entry must be positive.
  static AggregationWeights from_weights(const std::array<double, kNumExperts>& w);
};

// Throws NumericError unless all entries are >= 0 and sum to 1 within 1e-9.
void check_simplex(const std::array<double, kNumExperts>& w);

struct AggregatedPrediction {
  Vector combined;
  Vector probs;
};

AggregatedPrediction aggregate(const Vector& v1, const Vector& v2, const Vector& v3, const AggregationWeights& weights);

// Inner product of the two probability vectors.
double stability_objective(const AggregatedPrediction& a, const AggregatedPrediction& b);

// Per-expert logits for a whole set, one row per sample.
struct ExpertLogits {
  std::array<Mat, kNumExperts> v;
  Eigen::Index rows() const { return v[0].rows(); }
  ExpertLogits slice(std::span<const std::size_t> rows) const;
};

ExpertLogits compute_expert_logits(const ExpertBundle& bundle, const PairedDataset& data, int batch_size = 256);

Mat combine(const ExpertLogits& logits, const AggregationWeights& weights);
std::vector<int> predict(const ExpertLogits& logits, const AggregationWeights& weights);

// Whether the stability inner product is taken over probabilities (default)
// or over the raw combined logits.
enum class StabilityMode { probs, logits };

// Batch-mean stability of two views and its gradient with respect to theta.
double batch_stability(const ExpertLogits& a, const ExpertLogits& b, const Theta& theta, StabilityMode mode,
                       Theta* grad = nullptr);

// Mean cross-entropy of the combined logits and its gradient w.r.t. theta.
double batch_aggregate_ce(const ExpertLogits& logits, std::span<const int> labels, const Theta& theta,
                          Theta* grad = nullptr);

struct AdaptConfig {
  nn::AdamConfig adam{1e-2, 0.9, 0.999, 1e-8};
  int epochs = 5;
  int batch_size = 128;
  StabilityMode mode = StabilityMode::probs;
  std::uint64_t seed = 0;
  bool operator==(const AdaptConfig&) const = default;
};

struct AdaptResult {
  AggregationWeights weights;
  // Objective on a fixed evaluation set; entry 0 is the starting point and
  // each later entry follows one epoch.
  std::vector<double> trace;
  std::string parameter_hash_before;
  std::string parameter_hash_after;
  std::int64_t steps = 0;
};

// Full-batch Adam on precomputed logits; `steps` iterations from theta = 0.
AdaptResult maximize_stability(const ExpertLogits& a, const ExpertLogits& b, const nn::AdamConfig& adam, int steps,
                               StabilityMode mode = StabilityMode::probs);
AdaptResult minimize_aggregate_ce(const ExpertLogits& logits, std::span<const int> labels, const nn::AdamConfig& adam,
                                  int steps);

// Test-time training on unlabeled data: each epoch draws two fresh augmented
// views per sample and takes mini-batch ascent steps on the stability
// objective. Labels in `test` are never read. Throws UnsupportedModalityError
// when a modality cannot be augmented.
AdaptResult adapt_test_time(const PairedDataset& test, const ExpertBundle& bundle, const AugmentConfig& augment,
                            const AdaptConfig& config);

// Supervised fit of the weights on labeled training data with frozen experts.
AdaptResult phase2_fit(const PairedDataset& train, const ExpertBundle& bundle, const AdaptConfig& config);

struct WeightsFile {
  AggregationWeights weights;
  std::string checkpoint_hash;
  std::string split;
  std::string method;
  std::uint64_t seed = 0;
};

void write_weights(const std::string& path, const WeightsFile& file);
WeightsFile read_weights(const std::string& path);

// Non-empty when the two split ratios differ by more than 20% or the kinds
// differ, which breaks the same-distribution assumption of the supervised fit.
std::optional<std::string> distribution_mismatch(const DistributionSpec& train, const DistributionSpec& test);

}  // namespace ltmx
