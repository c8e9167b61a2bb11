#pragma once

#include <functional>

#include "mmcaps/autodiff.hpp"

namespace mmcaps {

// Scalar loss over the current parameter values. When record_grads is true
// the callable must also run backward so gradients land in the ParamSet;
// when false it must not touch gradients. Must be deterministic.
using LossFn = std::function<double(bool record_grads)>;

// Compares analytic gradients against central differences, entry by entry,
// and returns the worst relative error max|a-n| / max(|a|,|n|,1e-8).
// Throws DeterminismError if two plain evaluations disagree.
double grad_check(const LossFn& f, ParamSet& params, double h = 1e-5);

// Glorot-uniform init: entries ~ U(-b, b), b = sqrt(6/(fan_in+fan_out)).
Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng);
Tensor glorot_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out,
                      Rng& rng);

}  // namespace mmcaps
