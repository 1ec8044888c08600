#pragma once

#include <filesystem>

#include "core/train.hpp"

namespace metalora {

// On-disk training state: a manifest plus nested adapter / mapping-net
// checkpoints, the frozen base weights, the feature extractor kernel and the
// optimizer moment buffers (canonical parameter order).  Loading restores
// everything except the optimizer hyperparameters, which the caller re-binds
// from its RunConfig before continuing.
void save_train_state(const std::filesystem::path& dir, const TrainState& state);
TrainState load_train_state(const std::filesystem::path& dir);

}  // namespace metalora
