#include "mmcaps/grad_check.hpp"

#include <cmath>
#include <vector>

#include "mmcaps/errors.hpp"

namespace mmcaps {

double grad_check(const LossFn& f, ParamSet& params, double h) {
    double l1 = f(false);
    double l2 = f(false);
    if (l1 != l2)
        throw DeterminismError("grad_check: two forward passes disagree (" + std::to_string(l1) +
                               " vs " + std::to_string(l2) + ")");

    params.zero_grads();
    f(true);
    std::vector<Tensor> analytic;
    analytic.reserve(params.count());
    for (std::size_t p = 0; p < params.count(); ++p) analytic.push_back(params[p].grad);

    double worst = 0.0;
    for (std::size_t p = 0; p < params.count(); ++p) {
        Tensor& v = params[p].value;
        for (std::size_t i = 0; i < v.size(); ++i) {
            double orig = v.at(i);
            v.at(i) = orig + h;
            double lp = f(false);
            v.at(i) = orig - h;
            double lm = f(false);
            v.at(i) = orig;
            double numeric = (lp - lm) / (2.0 * h);
            double a = analytic[p].at(i);
            double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            worst = std::max(worst, std::fabs(a - numeric) / denom);
        }
    }
    return worst;
}

Tensor glorot_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out,
                      Rng& rng) {
    double b = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = rng.next_uniform(-b, b);
    return t;
}

Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
    return glorot_uniform(rows, cols, rows, cols, rng);
}

}  // namespace mmcaps
