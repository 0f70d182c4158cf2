#include "admitlab/prbs.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <string>

#include "admitlab/error.hpp"

namespace admitlab {

namespace {

// Fibonacci taps for maximal-length sequences, indexed by register length.
const std::array<std::vector<int>, 32> kTaps = {{
    {}, {},
    {2, 1}, {3, 2}, {4, 3}, {5, 3}, {6, 5}, {7, 6}, {8, 6, 5, 4}, {9, 5},
    {10, 7}, {11, 9}, {12, 11, 10, 4}, {13, 12, 11, 8}, {14, 13, 12, 2}, {15, 14},
    {16, 15, 13, 4}, {17, 14}, {18, 11}, {19, 18, 17, 14}, {20, 17}, {21, 19},
    {22, 21}, {23, 18}, {24, 23, 22, 17}, {25, 22}, {26, 25, 24, 20}, {27, 26, 25, 22},
    {28, 25}, {29, 27}, {30, 29, 28, 7}, {31, 28},
}};

}  // namespace

std::vector<int> default_taps(int order) {
    if (order < 2 || order > 31) {
        throw Error(ErrorCode::ParamOutOfRange, "PRBS order must lie in 2..31");
    }
    return kTaps[order];
}

TimeSeries generate_prbs(const PrbsConfig& config) {
    if (config.order < 2 || config.order > 31) {
        throw Error(ErrorCode::ParamOutOfRange, "PRBS order must lie in 2..31");
    }
    if (!(config.f_max > 0.0)) throw Error(ErrorCode::ParamOutOfRange, "PRBS f_max must be > 0");
    if (!(config.amplitude >= 0.0)) {
        throw Error(ErrorCode::ParamOutOfRange, "PRBS amplitude must be >= 0");
    }
    const std::uint32_t mask = (std::uint32_t{1} << config.order) - 1u;
    const std::uint32_t seed = config.seed & mask;
    if (seed == 0) throw Error(ErrorCode::ParamOutOfRange, "PRBS seed must be nonzero");

    const std::vector<int> taps = config.taps.empty() ? default_taps(config.order) : config.taps;
    std::uint32_t tap_mask = 0;
    for (int t : taps) {
        if (t < 1 || t > config.order) {
            throw Error(ErrorCode::InvalidTaps, "tap " + std::to_string(t) + " outside register");
        }
        tap_mask |= std::uint32_t{1} << (t - 1);
    }

    const std::int64_t period = config.period();
    TimeSeries out;
    out.dt = config.chip_duration();
    out.values.resize(static_cast<std::size_t>(period));
    std::uint32_t state = seed;
    for (std::int64_t k = 0; k < period; ++k) {
        out.values[static_cast<std::size_t>(k)] = (state & 1u) ? config.amplitude : -config.amplitude;
        const std::uint32_t fb = static_cast<std::uint32_t>(std::popcount(state & tap_mask) & 1);
        state = ((state << 1) | fb) & mask;
        if (state == seed && k + 1 < period) {
            throw Error(ErrorCode::InvalidTaps, "taps give period " + std::to_string(k + 1) +
                                                    ", expected " + std::to_string(period));
        }
    }
    if (state != seed) {
        throw Error(ErrorCode::InvalidTaps, "register did not return to seed after one period");
    }
    return out;
}

TimeSeries hold_and_repeat(const TimeSeries& chips, int steps_per_chip, int repeats) {
    if (steps_per_chip < 1 || repeats < 1) {
        throw Error(ErrorCode::InvalidArgument, "steps_per_chip and repeats must be >= 1");
    }
    TimeSeries out;
    out.dt = chips.dt / steps_per_chip;
    out.values.reserve(chips.values.size() * steps_per_chip * repeats);
    for (int r = 0; r < repeats; ++r) {
        for (double c : chips.values) out.values.insert(out.values.end(), steps_per_chip, c);
    }
    return out;
}

}  // namespace admitlab
