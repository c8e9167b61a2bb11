#include "mmcaps/optimizer.hpp"

#include <cmath>
#include <stdexcept>

#include "mmcaps/errors.hpp"

namespace mmcaps {

double cosine_lr(std::size_t step, std::size_t total_steps, double lr0) {
    if (total_steps == 0) throw ConfigError("total_steps: must be >= 1");
    if (step > total_steps)
        throw std::out_of_range("cosine_lr: step " + std::to_string(step) + " past total " +
                                std::to_string(total_steps));
    double frac = static_cast<double>(step) / static_cast<double>(total_steps);
    return lr0 * 0.5 * (1.0 + std::cos(3.141592653589793 * frac));
}

void clip_global_norm(ParamSet& params, double max_norm) {
    double norm = params.grad_global_norm();
    if (norm <= max_norm || norm == 0.0) return;
    double s = max_norm / norm;
    for (std::size_t p = 0; p < params.count(); ++p) {
        Tensor& g = params[p].grad;
        for (std::size_t i = 0; i < g.size(); ++i) g.at(i) *= s;
    }
}

AdamState::AdamState(const ParamSet& params) {
    m.reserve(params.count());
    v.reserve(params.count());
    for (std::size_t p = 0; p < params.count(); ++p) {
        m.emplace_back(params[p].value.rows(), params[p].value.cols());
        v.emplace_back(params[p].value.rows(), params[p].value.cols());
    }
}

void AdamState::step(ParamSet& params, double lr) {
    if (m.size() != params.count())
        throw ShapeError("adam: state for " + std::to_string(m.size()) + " params vs " +
                         std::to_string(params.count()));
    t += 1;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t p = 0; p < params.count(); ++p) {
        Parameter& par = params[p];
        for (std::size_t i = 0; i < par.grad.size(); ++i) {
            double g = par.grad.at(i);
            if (!std::isfinite(g))
                throw NumericError("adam: non-finite gradient in " + par.name);
            double mi = m[p].at(i) = beta1 * m[p].at(i) + (1.0 - beta1) * g;
            double vi = v[p].at(i) = beta2 * v[p].at(i) + (1.0 - beta2) * g * g;
            par.value.at(i) -= lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps);
        }
    }
    params.zero_grads();
}

}  // namespace mmcaps
