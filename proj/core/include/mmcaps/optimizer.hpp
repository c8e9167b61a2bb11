#pragma once

#include <cstdint>
#include <vector>

#include "mmcaps/autodiff.hpp"

namespace mmcaps {

// lr0 * 0.5 * (1 + cos(pi * step / total_steps)); step past the schedule
// end is a range error.
double cosine_lr(std::size_t step, std::size_t total_steps, double lr0);

// Scales all gradients by max_norm / ||g|| when the global norm exceeds it.
void clip_global_norm(ParamSet& params, double max_norm);

// Adam with bias correction. Moment tensors are aligned with ParamSet order.
class AdamState {
public:
    AdamState() = default;
    explicit AdamState(const ParamSet& params);

    // One update from the accumulated gradients; zeroes them afterwards.
    // A non-finite gradient aborts with a NumericError naming the parameter.
    void step(ParamSet& params, double lr);

    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::int64_t t = 0;
    std::vector<Tensor> m, v;
};

}  // namespace mmcaps
