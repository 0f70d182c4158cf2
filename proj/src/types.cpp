#include "admitlab/types.hpp"

#include <cmath>
#include <string>

#include "admitlab/error.hpp"

namespace admitlab {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::ParamOutOfRange: return "ParamOutOfRange";
        case ErrorCode::NoConvergence: return "NoConvergence";
        case ErrorCode::UnstableLinearization: return "UnstableLinearization";
        case ErrorCode::SingularResolvent: return "SingularResolvent";
        case ErrorCode::InvalidTaps: return "InvalidTaps";
        case ErrorCode::NumericalBlowup: return "NumericalBlowup";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::IllConditioned: return "IllConditioned";
        case ErrorCode::MissingFrequency: return "MissingFrequency";
        case ErrorCode::GenerationStalled: return "GenerationStalled";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::SchemaError: return "SchemaError";
        case ErrorCode::TooFewSamples: return "TooFewSamples";
        case ErrorCode::DegenerateData: return "DegenerateData";
        case ErrorCode::WidthMismatch: return "WidthMismatch";
        case ErrorCode::NotTreeBased: return "NotTreeBased";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

bool is_config_error(ErrorCode code) {
    switch (code) {
        case ErrorCode::ParamOutOfRange:
        case ErrorCode::InvalidTaps:
        case ErrorCode::IoError:
        case ErrorCode::SchemaError:
        case ErrorCode::InvalidArgument:
        case ErrorCode::NotTreeBased:
            return true;
        default:
            return false;
    }
}

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::ParamOutOfRange, what);
}

bool positive(double x) { return std::isfinite(x) && x > 0.0; }

}  // namespace

void PerUnitBase::validate() const {
    require(positive(s_base) && positive(u_base) && positive(f_base), "per-unit base must be positive");
}

void CircuitParams::validate() const {
    require(positive(l_filter), "l_filter must be > 0");
    require(std::isfinite(r_filter) && r_filter >= 0.0, "r_filter must be >= 0");
    require(positive(l_grid), "l_grid must be > 0");
    require(std::isfinite(r_grid) && r_grid >= 0.0, "r_grid must be >= 0");
    if (scr) {
        require(positive(*scr), "scr must be > 0");
        require(std::abs(l_grid * *scr - 1.0) <= 0.01, "l_grid inconsistent with scr");
    }
}

CircuitParams CircuitParams::table1() { return CircuitParams{}; }

CircuitParams CircuitParams::with_scr(double scr) {
    CircuitParams c;
    c.l_grid = 1.0 / scr;
    c.r_grid = c.l_grid / 10.0;
    c.scr = scr;
    return c;
}

std::string_view to_string(StructureId s) {
    switch (s) {
        case StructureId::pqGFL: return "pqGFL";
        case StructureId::pvGFL: return "pvGFL";
        case StructureId::viGFL: return "viGFL";
        case StructureId::ccGFM: return "ccGFM";
        case StructureId::vcGFM: return "vcGFM";
    }
    return "?";
}

std::string_view to_string(Mode m) { return m == Mode::GFM ? "GFM" : "GFL"; }

StructureId parse_structure(std::string_view name) {
    for (auto s : kAllStructures) {
        if (to_string(s) == name) return s;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown structure '" + std::string(name) +
                                                "' (valid: pqGFL, pvGFL, viGFL, ccGFM, vcGFM)");
}

Mode parse_mode(std::string_view name) {
    if (name == "GFM") return Mode::GFM;
    if (name == "GFL") return Mode::GFL;
    throw Error(ErrorCode::SchemaError, "unknown mode '" + std::string(name) + "'");
}

void GflControlParams::validate() const {
    for (double x : {omega_p, omega_q, omega_v, omega_n, xi_n, omega_cc, delay, omega_lpf_vi, omega_ff}) {
        require(positive(x), "GFL control parameters must all be > 0");
    }
}

void GfmControlParams::validate() const {
    for (double x : {inertia_h, damping_xi, omega_f, r_v, omega_lpf, omega_cc, delay, omega_ff}) {
        require(positive(x), "GFM control parameters must all be > 0");
    }
}

void OperatingPoint::validate() const {
    constexpr double eps = 1e-12;
    require(std::isfinite(p) && p >= -1.0 - eps && p <= 1.0 + eps, "p must lie in [-1, 1]");
    require(std::isfinite(q) && q >= -0.4 - eps && q <= 0.4 + eps, "q must lie in [-0.4, 0.4]");
    require(std::isfinite(v) && v >= 0.9 - eps && v <= 1.1 + eps, "v must lie in [0.9, 1.1]");
}

bool ComplexMatrix2::finite() const {
    for (const cplx& z : {dd, dq, qd, qq}) {
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    }
    return true;
}

}  // namespace admitlab
