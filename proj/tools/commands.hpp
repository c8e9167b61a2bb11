#pragma once

#include <cstdint>
#include <string>

#include "runconfig.hpp"

namespace mmtool {

// Each command throws mmcaps exceptions on failure; main maps them to
// exit codes (ConfigError -> 2, everything else -> 1).

void cmd_train(const RunConfig& cfg, const std::string& out_dir);

void cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
              const std::string& modalities, const std::string& task,
              const std::string& report_path);

void cmd_bench(const std::string& grid_path, const std::string& out_path);

// capsule < 0 means all capsules.
void cmd_inspect(const std::string& checkpoint_path, const std::string& data_dir,
                 long capsule, std::size_t top_n);

}  // namespace mmtool
