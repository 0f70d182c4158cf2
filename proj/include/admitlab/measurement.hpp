#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "admitlab/prbs.hpp"
#include "admitlab/smallsignal.hpp"

namespace admitlab {

struct Spectrum {
    std::vector<double> frequencies;  // Hz, ascending
    std::vector<cplx> values;         // one-sided amplitude phasors
};

enum class InjectionMode { ShuntCurrent, SeriesVoltage };

/// Shunt elements at the PCC on the measurement side. They belong to the test network,
/// not the converter, so they do not enter the measured admittance.
struct MeasurementNetwork {
    double c_pcc = 0.002;  // pu
    double g_pcc = 0.1;    // pu
};

struct MeasurementConfig {
    double dt = 5e-6;
    int periods_discard = 2;
    int periods_average = 4;
    InjectionMode injection_mode = InjectionMode::ShuntCurrent;

    PrbsConfig prbs_d{8, 1000.0, 0.02, {}, 1};
    PrbsConfig prbs_q{7, 1020.0, 0.02, {}, 1};
    PrbsConfig prbs_slow{8, 10.0, 0.02, {}, 1};
    PrbsConfig prbs_mid{9, 100.0, 0.02, {}, 1};
    double slow_dt_factor = 10.0;  // the slow and mid passes step at dt * slow_dt_factor
    double stitch_hz = 10.0;       // below: slow pass
    // [stitch_hz, mid_stitch_hz): mid pass, above: fast pass. The fast d-run resolves only
    // 7.8 Hz, too coarse for the power and PLL loop resonances in 10-100 Hz.
    // mid_stitch_hz <= stitch_hz disables the mid pass.
    double mid_stitch_hz = 100.0;
    double f_min_hz = 1.0;
    double f_max_hz = 10e3;

    // Extend the discarded lead-in until the slowest network mode has decayed by e^-14.
    bool auto_settle = true;
    MeasurementNetwork network;

    void validate() const;
};

struct ResponseSeries {
    TimeSeries v_d, v_q, i_d, i_q;  // i: current drawn from the PCC by the converter
};

/// Trapezoidal simulation of the converter, PCC shunt and grid. Returns the samples after
/// the first `discard_samples`.
ResponseSeries simulate_response(const StateSpaceModel& model, const TimeSeries& inj_d,
                                 const TimeSeries& inj_q, std::size_t discard_samples,
                                 const MeasurementNetwork& network = {},
                                 InjectionMode mode = InjectionMode::ShuntCurrent);

/// Coherent average over `periods_average` periods of `period_samples`, then one-sided
/// DFT amplitudes for bins up to `f_max_hz`.
Spectrum estimate_spectrum(const TimeSeries& ts, std::size_t period_samples, int periods_average,
                           double f_max_hz);

struct RunSpectra {
    Spectrum injection;
    Spectrum v_d, v_q, i_d, i_q;
};

struct AdmittanceSolution {
    AdmittanceSpectrum spectrum;
    std::vector<double> dropped;  // grid frequencies without a well-conditioned solve
};

/// Per grid frequency, interpolate each run's injection-normalized responses and solve
/// [i_d i_q] = Y [v_d v_q] from the two runs stacked column-wise.
AdmittanceSolution solve_admittance(const RunSpectra& run_d, const RunSpectra& run_q,
                                    std::span<const double> grid_hz, double max_condition = 1e6);

struct MeasurementResult {
    AdmittanceSpectrum measured;
    std::vector<double> dropped;
    int fast_periods_discarded = 0;
    int mid_periods_discarded = 0;
    int slow_periods_discarded = 0;
};

/// Native grid: slow-pass bins in [f_min, stitch), mid-pass bins in [stitch, mid_stitch),
/// then fast d-run bins up to f_max.
std::vector<double> native_measurement_grid(const MeasurementConfig& cfg);

/// Full PRBS measurement: d and q runs for the fast, mid and slow passes.
MeasurementResult measure_admittance(const StateSpaceModel& model, const MeasurementConfig& cfg,
                                     std::span<const double> grid_hz = {}, int threads = 1);

struct BinCheck {
    double frequency;
    double dd_mag_err_db, dd_phase_err_deg;
    double qq_mag_err_db, qq_phase_err_deg;
    bool pass;
};

struct ValidationReport {
    double band_lo_hz, band_hi_hz;
    double tol_mag_db, tol_phase_deg;
    std::vector<BinCheck> bins;
    double pass_fraction = 0.0;
    bool passed = false;
};

ValidationReport validate_measurement(const AdmittanceSpectrum& measured,
                                      const StateSpaceModel& model, double band_lo_hz,
                                      double band_hi_hz, double tol_mag_db, double tol_phase_deg);

/// Difference of two angles in degrees, wrapped to (-180, 180].
double wrap_deg(double deg);

}  // namespace admitlab
