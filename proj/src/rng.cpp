#include "pixeldoc/rng.hpp"

#include <cmath>

namespace pixeldoc {

double Rng::normal(double mean, double stddev) {
    if (has_spare_) {
        has_spare_ = false;
        return mean + spare_ * stddev;
    }
    const double two_pi = 6.283185307179586476925286766559;
    const double angle = next_double() * two_pi;
    // 1 - u keeps the argument of log strictly positive.
    const double radius = std::sqrt(-2.0 * std::log(1.0 - next_double()));
    spare_ = std::sin(angle) * radius;
    has_spare_ = true;
    return mean + std::cos(angle) * radius * stddev;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    auto mix = [](std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    std::uint64_t h = mix(seed + 0x9e3779b97f4a7c15ULL);
    h = mix(h ^ (a + 0x9e3779b97f4a7c15ULL));
    h = mix(h ^ (b + 0x6a09e667f3bcc909ULL));
    return h;
}

}  // namespace pixeldoc
