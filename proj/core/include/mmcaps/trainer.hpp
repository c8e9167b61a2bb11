#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mmcaps/dataset.hpp"
#include "mmcaps/model.hpp"
#include "mmcaps/optimizer.hpp"

namespace mmcaps {

struct TrainConfig {
    double lr0 = 1e-3;
    std::size_t total_steps = 300;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    double delta = 0.001;        // contrastive margin
    std::size_t eval_every = 50; // metrics record cadence
    double grad_clip = 5.0;      // global-norm ceiling, <= 0 disables
    std::string checkpoint_path; // written after the final step when set

    // Pause after this step without touching the lr schedule; 0 runs to
    // total_steps. Lets a driver checkpoint mid-run and resume later.
    // Never serialized.
    std::size_t stop_at_step = 0;

    void validate(std::size_t dataset_size) const;
};

struct MetricsRecord {
    std::size_t step = 0;  // 1-based, after the step ran
    double lr = 0, loss = 0, wall_ms = 0;
};

struct TrainState {
    AdamState adam;
    std::uint64_t rng_key = 0, rng_counter = 0;
    std::size_t step = 0;
};

struct TrainResult {
    std::vector<MetricsRecord> records;
    double initial_loss = 0, final_loss = 0;
    std::size_t steps_run = 0;
};

// Runs steps state.step .. total_steps-1. Batches are drawn without
// replacement within an epoch; every random draw is derived from
// (cfg.seed, epoch or step), so a run resumed from a checkpoint retraces
// the uninterrupted one. Metrics stream out as JSON lines when given.
TrainResult train(CapsuleModel& model, const TrainConfig& cfg, const TripleDataset& data,
                  TrainState* state = nullptr, std::ostream* metrics = nullptr);

}  // namespace mmcaps
