#include "mmcaps/rng.hpp"

#include <cmath>

namespace mmcaps {
namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
}

}  // namespace

Rng Rng::split(std::uint64_t stream_id) const {
    return Rng(mix64(key_ ^ mix64(stream_id + kGolden)));
}

std::uint64_t Rng::next_u64() {
    counter_ += 1;
    return mix64(key_ + kGolden * counter_);
}

double Rng::next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_uniform();
}

double Rng::next_normal() {
    // u1 in (0, 1] so the log is finite.
    double u1 = 1.0 - next_uniform();
    double u2 = next_uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace mmcaps
