#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "admitlab/smallsignal.hpp"
#include "admitlab/types.hpp"

namespace admitlab {

struct Interval {
    double lo = 0.0, hi = 0.0;
};

struct GflIntervals {
    Interval omega_p{6.0, 38.0};
    Interval omega_q{6.0, 38.0};
    Interval omega_v{3.0, 15.0};
    Interval omega_n{50.0, 1500.0};
    Interval omega_cc{1200.0, 3000.0};
    Interval delay{50e-6, 200e-6};
};

struct GfmIntervals {
    Interval inertia_h{0.5, 5.0};
    Interval damping_xi{0.7, 4.0};
    Interval omega_cc{1200.0, 3000.0};
    Interval delay{50e-6, 200e-6};
};

struct OperatingRanges {
    Interval p{-1.0, 1.0};
    Interval q{-0.4, 0.4};
    Interval v{0.9, 1.1};
};

struct SamplingSpec {
    std::uint64_t seed = 1;
    std::array<int, 5> counts{};  // indexed by StructureId
    GflIntervals gfl;
    GfmIntervals gfm;
    OperatingRanges op;
    CircuitParams circuit = CircuitParams::with_scr(15.0);
    std::vector<double> grid = log_grid(1.0, 1000.0, 100);

    int& count(StructureId s) { return counts[static_cast<std::size_t>(s)]; }
    int count(StructureId s) const { return counts[static_cast<std::size_t>(s)]; }
    void validate() const;

    /// 2500 samples each of pqGFL, pvGFL, ccGFM and vcGFM.
    static SamplingSpec default_pool(std::uint64_t seed);
    /// 2500 viGFL samples.
    static SamplingSpec default_holdout(std::uint64_t seed);
};

ControlParams sample_parameters(const SamplingSpec& spec, StructureId structure,
                                std::uint64_t draw_index);
OperatingPoint sample_operating_point(const SamplingSpec& spec, StructureId structure,
                                      std::uint64_t draw_index);

enum class FeatureKind { M, P };
enum class FeatureAxis { dd, qq };

std::string feature_name(FeatureKind kind, FeatureAxis axis, double freq_hz);
std::vector<std::string> feature_names(const std::vector<double>& grid);

/// [M_dd..., P_dd..., M_qq..., P_qq...] at the grid frequencies. Phases are unwrapped
/// along frequency, anchored to the principal value at the highest grid point.
std::vector<double> extract_features(const AdmittanceSpectrum& spectrum,
                                     const std::vector<double>& grid);

struct Provenance {
    ControlParams params;
    OperatingPoint op;
    std::uint64_t draw_index = 0;
};

struct Sample {
    std::uint64_t id = 0;  // unique within a dataset; orders rows canonically
    StructureId structure = StructureId::pqGFL;
    Mode mode = Mode::GFL;
    std::vector<double> features;
    std::optional<Provenance> provenance;
};

struct Dataset {
    std::vector<std::string> feature_names;
    std::vector<double> grid;
    std::vector<Sample> samples;
    std::optional<std::uint64_t> seed;
    std::optional<CircuitParams> circuit;

    std::size_t width() const { return feature_names.size(); }
    std::size_t size() const { return samples.size(); }
};

/// Sample id derived from the structure and the draw index that produced it.
std::uint64_t sample_id(StructureId structure, std::uint64_t draw_index);

struct StructureReport {
    StructureId structure;
    int requested = 0;
    std::uint64_t drawn = 0;
    std::uint64_t rejected = 0;
};

struct GenerationReport {
    std::uint64_t seed = 0;
    std::vector<StructureReport> structures;
};

/// Builds `spec.count(s)` stable samples per listed structure. Draw indices are
/// consumed in order; an unstable draw is skipped and the next index is used.
Dataset generate_dataset(const SamplingSpec& spec, const std::vector<StructureId>& structures,
                         int threads = 1, GenerationReport* report = nullptr);

/// CSV with a header of feature names, then `structure`, then `mode`. Provenance and the
/// grid go to a sidecar `<path>.meta.json` when known.
void write_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

std::filesystem::path meta_path(const std::filesystem::path& csv_path);

}  // namespace admitlab
