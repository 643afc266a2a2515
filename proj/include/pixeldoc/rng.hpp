#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace pixeldoc {

// Deterministic 64-bit generator (splitmix64). std::mt19937 plus the standard
// distributions would not give identical streams across library
// implementations, so bounded ints, doubles and gaussians are derived
// explicitly here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, n) by rejection, unbiased for any n >= 1.
    std::uint64_t bounded(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t x = next_u64();
            if (x >= threshold) {
                return x % n;
            }
        }
    }

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(bounded(n)); }

    // Uniform in [0, 1) with 53 bits of precision.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    bool chance(double p) { return next_double() < p; }

    // Box-Muller with a cached spare.
    double normal(double mean, double stddev);

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

    template <class T>
    const T& pick(const std::vector<T>& v) {
        return v[index(v.size())];
    }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Stateless mix of a seed with stream labels, for deriving independent
// per-item generators (dataset shard i, training step t, ...).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace pixeldoc
