#pragma once

#include <cstdint>
#include <string>

#include "mmcaps/dataset.hpp"
#include "mmcaps/model.hpp"
#include "mmcaps/trainer.hpp"

namespace mmtool {

// One flat bag of settings for a run. Defaults come from a profile
// ("desk" or "paper"), a JSON config file overrides those, and command
// line flags override the file.
struct RunConfig {
    std::string profile = "desk";
    mmcaps::ModelConfig model;
    mmcaps::TrainConfig train;
    mmcaps::SyntheticSpec data;
    // Pre-extracted feature files; when all six are set the synthetic
    // generator is skipped and these are read instead.
    std::string train_video_file, train_audio_file, train_text_file;
    std::string test_video_file, test_audio_file, test_text_file;

    bool uses_feature_files() const;
    // Full cross-module validation; throws ConfigError naming the key.
    void validate() const;
};

RunConfig profile_defaults(const std::string& profile);

// Reads a JSON object of flat keys; a "profile" key inside resets the
// defaults before the remaining keys apply. Unknown keys are rejected.
RunConfig load_run_config(const std::string& path);

// Applies one "key=value" flag override on top of an existing config.
void apply_override(RunConfig& cfg, const std::string& assignment);

// One seed drives model init, batch order, dropout and data generation.
void set_seed(RunConfig& cfg, std::uint64_t seed);

}  // namespace mmtool
