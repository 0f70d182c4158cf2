#pragma once

#include <cstdint>
#include <initializer_list>

namespace admitlab {

/// Counter-based stream keyed by a tuple of integers. Two streams with the same key
/// produce the same numbers regardless of where or in which thread they are created.
class KeyedRng {
public:
    KeyedRng(std::initializer_list<std::uint64_t> key) {
        std::uint64_t h = 0x243f6a8885a308d3ull;
        for (std::uint64_t k : key) h = mix(h ^ mix(k + 0x9e3779b97f4a7c15ull));
        state_ = h;
    }

    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix(state_);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n) by rejection, n > 0.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x;
        do {
            x = next();
        } while (x >= limit);
        return x % n;
    }

    /// Poisson(1) by inversion, capped at 16.
    int poisson1() {
        const double u = uniform();
        double p = 0.36787944117144233, cdf = p;
        int k = 0;
        while (u >= cdf && k < 16) {
            ++k;
            p /= k;
            cdf += p;
        }
        return k;
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

}  // namespace admitlab
