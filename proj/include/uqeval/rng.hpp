#pragma once

#include <cstdint>

namespace uqeval {

// splitmix64: tiny, portable, identical output on every platform. Used for
// fixture generation, retry jitter, and failure-injection decisions so runs
// are reproducible from a single seed.
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double next_unit() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    // uniform integer in [0, bound)
    std::uint64_t next_below(std::uint64_t bound) {
        return next() % bound;
    }

    // uniform in [lo, hi)
    double next_range(double lo, double hi) {
        return lo + (hi - lo) * next_unit();
    }
};

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    SplitMix64 r(a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2)));
    return r.next();
}

} // namespace uqeval
