#pragma once

#include <filesystem>
#include <string>

#include "admitlab/classifiers.hpp"
#include "admitlab/dataset.hpp"
#include "admitlab/measurement.hpp"
#include "admitlab/smallsignal.hpp"

namespace admitlab {

/// A converter scenario: structure, control parameters, circuit and operating point.
struct ModelDescriptor {
    StructureId structure = StructureId::vcGFM;
    ControlParams params = GfmControlParams{};
    CircuitParams circuit = CircuitParams::table1();
    OperatingPoint op{1.0, 0.0, 1.0};
};

std::string read_text_file(const std::filesystem::path& path);

/// JSON descriptor. Missing control fields keep their defaults; the circuit is either
/// {"preset": "table1"}, {"scr": x} or explicit l/r values.
ModelDescriptor parse_descriptor(const std::string& json_text);
ModelDescriptor load_descriptor(const std::filesystem::path& path);

MeasurementConfig parse_measurement_config(const std::string& json_text);
/// Starts from the default pool plus the 2500-sample viGFL holdout; "counts" replaces
/// all counts at once.
SamplingSpec parse_sampling_spec(const std::string& json_text, std::uint64_t seed);
Hyperparams parse_hyperparams(const std::string& json_text);

/// Rows of freq_hz and magnitude / phase (deg) of all four entries.
void write_bode(const AdmittanceSpectrum& s, const std::filesystem::path& path);
/// Rows of freq_hz and real / imaginary parts of Ydd, Ydq, Yqd, Yqq.
void write_admittance(const AdmittanceSpectrum& s, const std::filesystem::path& path);
std::string validation_to_json(const ValidationReport& r, const std::vector<double>& dropped);

}  // namespace admitlab
