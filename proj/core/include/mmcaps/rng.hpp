#pragma once

#include <cstdint>

namespace mmcaps {

// Counter-based generator: the i-th output is a pure function of (key, i),
// so streams can be split without sharing mutable state and any draw can be
// reproduced from the serialized (key, counter) pair alone.
class Rng {
public:
    explicit Rng(std::uint64_t key, std::uint64_t counter = 0)
        : key_(key), counter_(counter) {}

    // Derives an independent stream; deterministic in (key, stream_id).
    Rng split(std::uint64_t stream_id) const;

    std::uint64_t next_u64();
    double next_uniform();              // [0, 1)
    double next_normal();               // standard normal, Box-Muller
    double next_uniform(double lo, double hi);

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_;
};

}  // namespace mmcaps
