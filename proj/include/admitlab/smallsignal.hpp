#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "admitlab/types.hpp"

namespace admitlab {

/// Linearized converter seen from the PCC.
///
/// The model is kept in split form so the modulation delay can be applied exactly:
///
///   dx/dt = a_open x + b_v dv + b_w dw
///   di    = c x + d dv                (current drawn from the PCC, load convention)
///   dz    = c_w x + d_wv dv          (modulation command, grid frame)
///   dw(t) = dz(t - delay)
///
/// `a` and `b` hold the delay-free closure (dw = dz). Admittance is
/// Y(s) = c (sI - a_open - b_w e^{-s delay} c_w)^{-1} (b_v + b_w e^{-s delay} d_wv) + d.
struct StateSpaceModel {
    StructureId structure = StructureId::pqGFL;
    Eigen::MatrixXd a;
    Eigen::MatrixXd b;
    Eigen::MatrixXd c;
    Eigen::Matrix2d d = Eigen::Matrix2d::Zero();
    double delay = 0.0;
    std::vector<std::string> state_labels;

    Eigen::MatrixXd a_open;
    Eigen::MatrixXd b_v;
    Eigen::MatrixXd b_w;
    Eigen::MatrixXd c_w;
    Eigen::MatrixXd d_wv;

    CircuitParams circuit;  // filter and grid the model was linearized against
    double omega_base = 2.0 * std::numbers::pi * 50.0;

    int order() const { return static_cast<int>(a.rows()); }
};

Equilibrium steady_state(StructureId structure, const CircuitParams& circuit,
                         const OperatingPoint& op);

/// Residual norm of the nonlinear filter and power-flow equations at `eq`.
double steady_state_residual(const CircuitParams& circuit, const OperatingPoint& op,
                             const Equilibrium& eq);

/// State names for a structure, in model order.
std::vector<std::string> state_inventory(StructureId structure);

StateSpaceModel build_model(StructureId structure, const ControlParams& params,
                            const CircuitParams& circuit, const OperatingPoint& op,
                            const PerUnitBase& base = {});

/// Same as build_model without the stability gate. Used by tests and diagnostics.
StateSpaceModel build_model_unchecked(StructureId structure, const ControlParams& params,
                                      const CircuitParams& circuit, const OperatingPoint& op,
                                      const PerUnitBase& base = {});

/// State matrix of the converter connected to the RL grid of `model.circuit`, with the
/// PCC voltage eliminated algebraically. With `pade` each delay channel is replaced by a
/// third-order Pade approximant, otherwise the delay is dropped.
Eigen::MatrixXd interconnected_state_matrix(const StateSpaceModel& model, bool pade);

/// Largest real part over the delay-free and Pade-delay interconnections with the grid.
double max_real_eigenvalue(const StateSpaceModel& model);

/// Converter with no control: the modulated voltage is held at its equilibrium.
StateSpaceModel filter_only_model(const CircuitParams& circuit, const PerUnitBase& base = {});

ComplexMatrix2 admittance_at(const StateSpaceModel& model, double omega);

ComplexMatrix2 filter_admittance(const CircuitParams& circuit, double omega,
                                 const PerUnitBase& base = {});

/// e^{-j omega delay}, the modulation path factor.
cplx delay_factor(double omega, double delay);

struct AdmittanceSpectrum {
    std::vector<double> frequencies;  // Hz
    std::vector<ComplexMatrix2> entries;
};

AdmittanceSpectrum sweep_admittance(const StateSpaceModel& model,
                                    std::span<const double> frequencies_hz);

/// Log-spaced grid with both endpoints included.
std::vector<double> log_grid(double f_lo, double f_hi, int points);

}  // namespace admitlab
