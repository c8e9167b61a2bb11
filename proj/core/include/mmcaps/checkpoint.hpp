#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mmcaps/model.hpp"
#include "mmcaps/trainer.hpp"

namespace mmcaps {

// On-disk training snapshot: every parameter and Adam moment as named f64
// tensors, the RNG state, and both configs as a JSON blob. Round-trips
// byte-exactly.
struct Checkpoint {
    ModelConfig model;
    TrainConfig train;
    std::vector<std::pair<std::string, Tensor>> entries;
    std::uint64_t rng_key = 0, rng_counter = 0;
    std::size_t step = 0;
};

void save_checkpoint(const std::string& path, const CapsuleModel& model, const TrainConfig& cfg,
                     const TrainState& state);
Checkpoint load_checkpoint(const std::string& path);

// Rebuilds the model and resume state from a loaded checkpoint; entry
// names and shapes must match the stored model config exactly.
CapsuleModel model_from_checkpoint(const Checkpoint& ckpt);
TrainState state_from_checkpoint(const Checkpoint& ckpt, const CapsuleModel& model);

}  // namespace mmcaps
