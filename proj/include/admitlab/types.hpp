#pragma once

#include <array>
#include <complex>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace admitlab {

using cplx = std::complex<double>;

struct PerUnitBase {
    double s_base = 1.044e9;  // VA
    double u_base = 400e3;    // V, line-line RMS
    double f_base = 50.0;     // Hz

    double omega_base() const { return 2.0 * std::numbers::pi * f_base; }
    void validate() const;
};

/// Series RL filter plus Thevenin grid, all in per unit on PerUnitBase.
struct CircuitParams {
    double l_filter = 0.15;
    double r_filter = 0.005;
    double l_grid = 0.5;
    double r_grid = 0.05;
    std::optional<double> scr;

    void validate() const;

    /// Filter and grid of the measurement-validation scenario.
    static CircuitParams table1();
    /// Filter of table1() behind a grid with reactance 1/scr and X/R = 10.
    static CircuitParams with_scr(double scr);
};

enum class Mode { GFL, GFM };

enum class StructureId { pqGFL, pvGFL, viGFL, ccGFM, vcGFM };

inline constexpr std::array<StructureId, 5> kAllStructures = {
    StructureId::pqGFL, StructureId::pvGFL, StructureId::viGFL, StructureId::ccGFM,
    StructureId::vcGFM};

constexpr Mode mode_of(StructureId s) {
    return (s == StructureId::ccGFM || s == StructureId::vcGFM) ? Mode::GFM : Mode::GFL;
}

std::string_view to_string(StructureId s);
std::string_view to_string(Mode m);
StructureId parse_structure(std::string_view name);
Mode parse_mode(std::string_view name);

struct GflControlParams {
    double omega_p = 22.0;       // active power loop bandwidth, rad/s
    double omega_q = 22.0;       // reactive power loop bandwidth, rad/s
    double omega_v = 9.0;        // PCC voltage loop bandwidth, rad/s
    double omega_n = 775.0;      // PLL natural frequency, rad/s
    double xi_n = 1.0;           // PLL damping
    double omega_cc = 2100.0;    // current loop bandwidth, rad/s
    double delay = 125e-6;       // s
    double omega_lpf_vi = 50.0;  // viGFL voltage filter cutoff, rad/s
    double omega_ff = 100.0;     // current loop voltage feedforward filter, rad/s

    void validate() const;
};

struct GfmControlParams {
    double inertia_h = 2.75;   // s
    double damping_xi = 2.35;  // power loop damping ratio
    double omega_f = 60.0;     // transient virtual resistor high-pass corner, rad/s
    double r_v = 0.09;         // transient virtual resistance, pu
    double omega_lpf = 83.0;   // quasi-static model filter, rad/s
    double omega_cc = 2100.0;  // rad/s
    double delay = 125e-6;     // s
    double omega_ff = 100.0;   // rad/s

    void validate() const;
};

using ControlParams = std::variant<GflControlParams, GfmControlParams>;

struct OperatingPoint {
    double p = 0.0;
    double q = 0.0;
    double v = 1.0;

    void validate() const;
};

/// Linearization point in the voltage-aligned grid frame (v_q0 = 0), generator convention.
struct Equilibrium {
    double v_d0 = 1.0, v_q0 = 0.0;
    double i_d0 = 0.0, i_q0 = 0.0;
    double e_d0 = 1.0, e_q0 = 0.0;
    double theta0 = 0.0;  // angle of the controller frame
    double emf0 = 1.0;    // magnitude of the emf the controller regulates (GFM)
    int iterations = 0;
};

struct ComplexMatrix2 {
    cplx dd{}, dq{}, qd{}, qq{};

    bool finite() const;
};

}  // namespace admitlab
