#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ltmx/losses.hpp"
#include "ltmx/model.hpp"
#include "ltmx/nn/adam.hpp"

namespace ltmx {

struct TrainConfig {
  nn::AdamConfig adam;
  int batch_size = 128;
  int epochs = 10;
  double lambda = 1.0;
  std::uint64_t seed = 0;
  bool operator==(const TrainConfig&) const = default;
};

// Sample-weighted means over one epoch. `unified` obeys
// unified = ce + bal + inv + lambda * (cls_sum + conf_sum).
struct EpochLoss {
  int epoch = 0;
  double ce = 0.0;
  double bal = 0.0;
  double inv = 0.0;
  double cls_sum = 0.0;
  double conf_sum = 0.0;
  double unified = 0.0;
  double composite() const { return ce + bal + inv; }
};

// Everything needed to continue training bit-for-bit after a restart.
struct TrainState {
  nn::Adam optimizer;
  int epochs_done = 0;
  Vector priors;
};

struct BatchLoss {
  CompositeLoss composite;
  std::vector<double> cls;
  std::vector<double> conf;
  double unified = 0.0;
};

// Loss of one batch under the unified objective; fills `grads` when given.
// The TCP regression target is computed from the classifier head but treated
// as a constant. `targets` overrides it (one vector per modality).
BatchLoss unified_batch_loss(const ForwardResult& out, std::span<const int> labels, const Vector& priors,
                             double lambda, OutputGrads* grads = nullptr,
                             const std::vector<Eigen::VectorXd>* targets = nullptr);

// TCP of each modality's classifier head at the true labels.
std::vector<Eigen::VectorXd> tcp_targets(const ForwardResult& out, std::span<const int> labels);

TrainState make_train_state(const PairedDataset& train, const TrainConfig& config);

// Batch order of one epoch; depends only on (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

using EpochCallback = std::function<void(const EpochLoss&, const TrainState&)>;

// Runs epochs state.epochs_done .. config.epochs-1. Throws NumericError with
// epoch, batch and component losses when a loss goes non-finite.
std::vector<EpochLoss> train_experts(const PairedDataset& train, ExpertBundle& bundle, const TrainConfig& config,
                                     TrainState& state, const EpochCallback& on_epoch = {});

}  // namespace ltmx
