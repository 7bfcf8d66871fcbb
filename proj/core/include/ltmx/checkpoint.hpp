#pragma once

#include <map>
#include <string>

#include "ltmx/model.hpp"
#include "ltmx/training.hpp"

namespace ltmx {

inline constexpr const char* kCheckpointMagic = "ltmx-ckpt-v1";

// Free-form string annotations stored alongside the tensors (variant name,
// split id, data seed, ...).
using CheckpointMetadata = std::map<std::string, std::string>;

struct LoadedCheckpoint {
  ExpertBundle bundle;
  TrainConfig train;
  TrainState state;
  CheckpointMetadata metadata;
};

// Layout: the magic line, a decimal byte count line, a JSON header of that
// length (architecture, training config, optimizer state, tensor index), then
// the raw little-endian doubles. Written to a temporary file and renamed.
void save_checkpoint(const std::string& path, const ExpertBundle& bundle, const TrainConfig& train,
                     const TrainState& state, const CheckpointMetadata& metadata = {});
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace ltmx
