#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmcaps/model.hpp"

namespace mmcaps {

struct BenchRowSpec {
    Routing routing = Routing::self_attention;
    std::size_t capsules = 64, d1 = 16, d2 = 16, iters = 3;
};

struct BenchConfig {
    std::vector<BenchRowSpec> rows;
    std::size_t batch = 64;
    std::size_t repeats = 5;  // >= 5
    std::size_t warmups = 2;  // >= 2
    std::uint64_t seed = 1;

    void validate() const;
};

struct BenchRow {
    Routing routing;
    std::size_t capsules, d1, d2, iters, batch;
    double ms_mean = 0, ms_std = 0;
    std::int64_t peak_bytes = 0;
    std::vector<double> ms_samples;
};

// One full training step (forward + loss + backward over the batch, three
// modalities) per repetition, timed after the warmups; runs strictly
// sequentially. peak_bytes is the tensor allocator's transient high-water
// mark over one measured step, which is deterministic in the config.
std::vector<BenchRow> run_bench(const BenchConfig& cfg);

std::string bench_csv(const std::vector<BenchRow>& rows);
std::string bench_json(const std::vector<BenchRow>& rows);

// The model behind a grid row: hidden width scales with d2 (4x, matching
// the 1024 default at d2=256) so the sweep reflects routing cost.
ModelConfig bench_model_config(const BenchRowSpec& row);

}  // namespace mmcaps
