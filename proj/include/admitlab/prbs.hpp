#pragma once

#include <cstdint>
#include <vector>

namespace admitlab {

struct TimeSeries {
    double dt = 1.0;
    std::vector<double> values;
};

/// Maximal-length LFSR perturbation. Taps are 1-based register positions of the
/// Fibonacci feedback polynomial; empty taps select the built-in table for `order`.
struct PrbsConfig {
    int order = 8;
    double f_max = 1000.0;  // Hz; chip rate is 2 f_max
    double amplitude = 0.02;
    std::vector<int> taps;
    std::uint32_t seed = 1;

    double chip_rate() const { return 2.0 * f_max; }
    double chip_duration() const { return 1.0 / chip_rate(); }
    std::int64_t period() const { return (std::int64_t{1} << order) - 1; }
};

/// Feedback taps from the built-in maximal-length table (orders 2..31).
std::vector<int> default_taps(int order);

/// One period of +-amplitude chips, sampled at the chip rate.
TimeSeries generate_prbs(const PrbsConfig& config);

/// Zero-order hold of each chip over `steps_per_chip` samples, repeated `repeats` times.
TimeSeries hold_and_repeat(const TimeSeries& chips, int steps_per_chip, int repeats);

}  // namespace admitlab
