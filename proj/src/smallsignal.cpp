#include "admitlab/smallsignal.hpp"

#include <cmath>

#include "admitlab/error.hpp"

namespace admitlab {

namespace {

using Mat2X = Eigen::Matrix<double, 2, Eigen::Dynamic>;
using RowX = Eigen::RowVectorXd;
using Vec2 = Eigen::Vector2d;

// Multiplication by j in the dq plane.
const Eigen::Matrix2d kJ = (Eigen::Matrix2d() << 0.0, -1.0, 1.0, 0.0).finished();

Eigen::Matrix2d rot(double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    return (Eigen::Matrix2d() << c, -s, s, c).finished();
}

// Accumulates linear state equations over columns [states | dv_d dv_q | dw_d dw_q].
class Builder {
public:
    int add(std::string label) {
        labels_.push_back(std::move(label));
        return static_cast<int>(labels_.size()) - 1;
    }

    int add2(std::string prefix) {
        const int i = add(prefix + "_d");
        add(prefix + "_q");
        return i;
    }

    explicit Builder(double omega_base) : omega_base_(omega_base) {}

    void freeze() {
        n_ = static_cast<int>(labels_.size());
        deriv_ = Eigen::MatrixXd::Zero(n_, n_ + 4);
        assigned_.assign(n_, false);
    }

    int cols() const { return n_ + 4; }
    RowX zero() const { return RowX::Zero(cols()); }
    Mat2X zero2() const { return Mat2X::Zero(2, cols()); }

    RowX state(int i) const {
        RowX r = zero();
        r(i) = 1.0;
        return r;
    }
    Mat2X state2(int i) const {
        Mat2X m = zero2();
        m(0, i) = 1.0;
        m(1, i + 1) = 1.0;
        return m;
    }
    Mat2X v() const {
        Mat2X m = zero2();
        m(0, n_) = 1.0;
        m(1, n_ + 1) = 1.0;
        return m;
    }
    Mat2X w() const {
        Mat2X m = zero2();
        m(0, n_ + 2) = 1.0;
        m(1, n_ + 3) = 1.0;
        return m;
    }

    void deriv(int i, const RowX& r) {
        deriv_.row(i) = r;
        assigned_[i] = true;
    }
    void deriv2(int i, const Mat2X& m) {
        deriv(i, m.row(0));
        deriv(i + 1, m.row(1));
    }

    StateSpaceModel finish(StructureId s, const Mat2X& current_out, const Mat2X& command,
                           double delay) const {
        for (int i = 0; i < n_; ++i) {
            if (!assigned_[i]) {
                throw Error(ErrorCode::InvalidArgument, "state without equation: " + labels_[i]);
            }
        }
        if (!current_out.rightCols(2).isZero() || !command.rightCols(2).isZero()) {
            throw Error(ErrorCode::InvalidArgument, "outputs may not depend on the delayed command");
        }
        StateSpaceModel m;
        m.structure = s;
        m.delay = delay;
        m.state_labels = labels_;
        m.a_open = deriv_.leftCols(n_);
        m.b_v = deriv_.middleCols(n_, 2);
        m.b_w = deriv_.middleCols(n_ + 2, 2);
        // Output is the current drawn from the PCC: negate the generator-convention current.
        m.c = -current_out.leftCols(n_);
        m.d = -current_out.middleCols(n_, 2);
        m.c_w = command.leftCols(n_);
        m.d_wv = command.middleCols(n_, 2);
        m.a = m.a_open + m.b_w * m.c_w;
        m.b = m.b_v + m.b_w * m.d_wv;
        m.omega_base = omega_base_;
        return m;
    }

private:
    double omega_base_;
    std::vector<std::string> labels_;
    int n_ = 0;
    Eigen::MatrixXd deriv_;
    std::vector<bool> assigned_;
};

// Small-signal rotation of a grid-frame quantity into a frame at angle theta0 + dtheta.
Mat2X to_ctrl(double theta0, const Mat2X& dx, const Vec2& x0, const RowX& dtheta) {
    return rot(-theta0) * (dx - (kJ * x0) * dtheta);
}

Mat2X from_ctrl(double theta0, const Mat2X& dxc, const Vec2& x0_grid, const RowX& dtheta) {
    return rot(theta0) * dxc + (kJ * x0_grid) * dtheta;
}

struct Context {
    double wb;
    double r;
    double l;
    Vec2 v0, i0, e0;
    double theta0;
};

// Series RL filter, generator convention: (L/wb) di/dt = e - v - R i - j L i.
void add_filter(Builder& b, const Context& cx, int si) {
    const Mat2X i = b.state2(si);
    b.deriv2(si, (cx.wb / cx.l) * (b.w() - b.v() - cx.r * i - cx.l * kJ * i));
}

RowX delta_p(const Builder& b, const Context& cx, int si) {
    return cx.v0.transpose() * b.state2(si) + cx.i0.transpose() * b.v();
}

RowX delta_q(const Builder& b, const Context& cx, int si) {
    return (-kJ * cx.v0).transpose() * b.state2(si) + (kJ * cx.i0).transpose() * b.v();
}

struct CurrentLoopStates {
    int vff;
    int integ;
};

CurrentLoopStates alloc_current_loop(Builder& b) {
    return {b.add2("vff"), b.add2("cc_int")};
}

// PI current loop in the controller frame with decoupling and filtered PCC feedforward.
Mat2X current_loop(Builder& b, const Context& cx, const CurrentLoopStates& st, int si,
                   const Mat2X& iref_c, const RowX& dtheta, double omega_cc, double omega_ff) {
    const double kp = omega_cc * cx.l / cx.wb;
    const double ki = omega_cc * cx.r;
    const Mat2X vc = to_ctrl(cx.theta0, b.v(), cx.v0, dtheta);
    const Mat2X ic = to_ctrl(cx.theta0, b.state2(si), cx.i0, dtheta);
    const Mat2X vff = b.state2(st.vff);
    const Mat2X integ = b.state2(st.integ);
    const Mat2X err = iref_c - ic;
    b.deriv2(st.vff, omega_ff * (vc - vff));
    b.deriv2(st.integ, ki * err);
    const Mat2X ec = vff + cx.l * kJ * ic + kp * err + integ;
    return from_ctrl(cx.theta0, ec, cx.e0, dtheta);
}

StateSpaceModel build_gfl(StructureId s, const GflControlParams& p, const CircuitParams& circuit,
                          const Equilibrium& eq, const OperatingPoint& op, double wb) {
    const Context cx{wb, circuit.r_filter, circuit.l_filter,
                     Vec2(eq.v_d0, eq.v_q0), Vec2(eq.i_d0, eq.i_q0), Vec2(eq.e_d0, eq.e_q0), 0.0};
    const double vd0 = eq.v_d0;

    Builder b(wb);
    const int si = b.add2("i");
    const int th = b.add("pll_theta");
    const int xw = b.add("pll_int");
    int s_d = -1, s_q = -1, s_vm = -1;
    switch (s) {
        case StructureId::pqGFL:
            s_d = b.add("id_ref");
            s_q = b.add("iq_ref");
            break;
        case StructureId::pvGFL:
            s_d = b.add("id_ref");
            s_q = b.add("v_int");
            s_vm = b.add("vmag_filt");
            break;
        case StructureId::viGFL:
            s_d = b.add("vd_filt");
            s_q = b.add("iq_ref");
            break;
        default:
            throw Error(ErrorCode::InvalidArgument, "not a GFL structure");
    }
    const CurrentLoopStates cl = alloc_current_loop(b);
    b.freeze();

    add_filter(b, cx, si);

    // SRF-PLL driving the q-axis PCC voltage to zero.
    const RowX dtheta = b.state(th);
    const Mat2X vc = to_ctrl(0.0, b.v(), cx.v0, dtheta);
    const double kp_pll = 2.0 * p.xi_n * p.omega_n / vd0;
    const double ki_pll = p.omega_n * p.omega_n / vd0;
    b.deriv(th, kp_pll * vc.row(1) + b.state(xw));
    b.deriv(xw, ki_pll * vc.row(1));

    const RowX dp = delta_p(b, cx, si);
    const RowX dq = delta_q(b, cx, si);
    RowX id_ref = b.zero();
    RowX iq_ref = b.zero();

    if (s == StructureId::viGFL) {
        // I_d* = P* / LPF(v_d)
        b.deriv(s_d, p.omega_lpf_vi * (vc.row(0) - b.state(s_d)));
        id_ref = -(op.p / (vd0 * vd0)) * b.state(s_d);
    } else {
        b.deriv(s_d, -(p.omega_p / vd0) * dp);
        id_ref = b.state(s_d);
    }

    if (s == StructureId::pvGFL) {
        // PI on the filtered |V|; integral gain set by the grid reactance the loop acts through.
        const RowX dv_mag = (cx.v0.transpose() * b.v()) / cx.v0.norm();
        const double w_meas = 10.0 * p.omega_v;
        b.deriv(s_vm, w_meas * (dv_mag - b.state(s_vm)));
        const double ki_v = p.omega_v / circuit.l_grid;
        const double kp_v = ki_v / w_meas;
        b.deriv(s_q, -ki_v * b.state(s_vm));
        iq_ref = kp_v * b.state(s_vm) - b.state(s_q);
    } else {
        b.deriv(s_q, (p.omega_q / vd0) * dq);
        iq_ref = b.state(s_q);
    }

    Mat2X iref(2, b.cols());
    iref.row(0) = id_ref;
    iref.row(1) = iq_ref;
    const Mat2X cmd = current_loop(b, cx, cl, si, iref, dtheta, p.omega_cc, p.omega_ff);
    return b.finish(s, b.state2(si), cmd, p.delay);
}

StateSpaceModel build_gfm(StructureId s, const GfmControlParams& p, const CircuitParams& circuit,
                          const Equilibrium& eq, double wb) {
    const Context cx{wb, circuit.r_filter, circuit.l_filter,
                     Vec2(eq.v_d0, eq.v_q0), Vec2(eq.i_d0, eq.i_q0), Vec2(eq.e_d0, eq.e_q0),
                     eq.theta0};
    Builder b(wb);
    const int si = b.add2("i");
    const int dw = b.add("dw");
    const int dl = b.add("delta");
    int inner = -1;
    CurrentLoopStates cl{-1, -1};
    if (s == StructureId::vcGFM) {
        inner = b.add2("tvr_lp");
    } else if (s == StructureId::ccGFM) {
        inner = b.add2("qsem_iref");
        cl = alloc_current_loop(b);
    } else {
        throw Error(ErrorCode::InvalidArgument, "not a GFM structure");
    }
    b.freeze();

    add_filter(b, cx, si);

    // Swing equation; kd makes damping_xi the damping ratio of the synchronizing mode.
    const double x_total = circuit.l_filter + circuit.l_grid;
    const double t_sync = eq.v_d0 * eq.emf0 / x_total;
    const double kd = 2.0 * p.damping_xi * std::sqrt(wb * t_sync / (2.0 * p.inertia_h));
    const RowX dp = delta_p(b, cx, si);
    b.deriv(dw, -dp / (2.0 * p.inertia_h) - kd * b.state(dw));
    b.deriv(dl, wb * b.state(dw));
    const RowX dtheta = b.state(dl);

    Mat2X cmd;
    if (s == StructureId::vcGFM) {
        // e* = E* - r_v * s/(s + w_f) * i, in the controller frame.
        const Mat2X ic = to_ctrl(cx.theta0, b.state2(si), cx.i0, dtheta);
        const Mat2X lp = b.state2(inner);
        b.deriv2(inner, p.omega_f * (ic - lp));
        const Mat2X ec = -p.r_v * (ic - lp);
        cmd = from_ctrl(cx.theta0, ec, cx.e0, dtheta);
    } else {
        // Quasi-static reference (E - v) / (j X), low-pass filtered.
        const Mat2X vc = to_ctrl(cx.theta0, b.v(), cx.v0, dtheta);
        const Mat2X iqs = (kJ * vc) / circuit.l_filter;
        const Mat2X iref = b.state2(inner);
        b.deriv2(inner, p.omega_lpf * (iqs - iref));
        cmd = current_loop(b, cx, cl, si, iref, dtheta, p.omega_cc, p.omega_ff);
    }
    return b.finish(s, b.state2(si), cmd, p.delay);
}

void validate_family(StructureId s, const ControlParams& params) {
    const bool gfl = std::holds_alternative<GflControlParams>(params);
    if (gfl != (mode_of(s) == Mode::GFL)) {
        throw Error(ErrorCode::ParamOutOfRange,
                    "parameter family does not match structure " + std::string(to_string(s)));
    }
    std::visit([](const auto& p) { p.validate(); }, params);
}

// Third-order Pade approximant of e^{-sT}, realized as (A, B, C, D).
struct Pade3 {
    Eigen::Matrix3d a;
    Eigen::Vector3d b;
    Eigen::RowVector3d c;
    double d;
};

Pade3 pade3(double t) {
    // In normalized time u = s T: H = -1 + (24 u^2 + 240) / (u^3 + 12 u^2 + 60 u + 120).
    Pade3 p;
    p.a << 0, 1, 0, 0, 0, 1, -120.0, -60.0, -12.0;
    p.a /= t;
    p.b << 0, 0, 1.0 / t;
    p.c << 240.0, 0.0, 24.0;
    p.d = -1.0;
    return p;
}

// Augmented (A, B_v) with the delay replaced by its Pade approximant; extra states appended.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> pade_augmented(const StateSpaceModel& m) {
    const int n = m.order();
    if (m.delay <= 0.0) return {m.a, m.b};
    const Pade3 p = pade3(m.delay);
    const int na = n + 6;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(na, na);
    Eigen::MatrixXd bv = Eigen::MatrixXd::Zero(na, 2);
    // dw_k = C_p xp_k + D_p z_k, dxp_k/dt = A_p xp_k + B_p z_k, z = c_w x + d_wv v.
    a.topLeftCorner(n, n) = m.a_open + p.d * m.b_w * m.c_w;
    bv.topRows(n) = m.b_v + p.d * m.b_w * m.d_wv;
    for (int k = 0; k < 2; ++k) {
        const int off = n + 3 * k;
        a.block(0, off, n, 3) = m.b_w.col(k) * p.c;
        a.block(off, 0, 3, n) = p.b * m.c_w.row(k);
        a.block(off, off, 3, 3) = p.a;
        bv.block(off, 0, 3, 2) = p.b * m.d_wv.row(k);
    }
    return {a, bv};
}

}  // namespace

Equilibrium steady_state(StructureId structure, const CircuitParams& circuit,
                         const OperatingPoint& op) {
    circuit.validate();
    op.validate();
    const double r = circuit.r_filter, x = circuit.l_filter, v = op.v;

    // Unknowns (E, delta, i_d, i_q) with the PCC voltage on the d axis.
    auto residual = [&](const Eigen::Vector4d& u) {
        const double e = u(0), dl = u(1), id = u(2), iq = u(3);
        return Eigen::Vector4d(e * std::cos(dl) - v - r * id + x * iq,
                               e * std::sin(dl) - r * iq - x * id,
                               v * id - op.p,
                               -v * iq - op.q);
    };
    Eigen::Vector4d u(v, 0.0, 0.0, 0.0);
    int it = 0;
    for (; it <= 50; ++it) {
        const Eigen::Vector4d f = residual(u);
        if (f.norm() < 1e-13) break;
        if (it == 50) {
            throw Error(ErrorCode::NoConvergence, "equilibrium solve did not converge in 50 iterations");
        }
        const double e = u(0), dl = u(1);
        Eigen::Matrix4d jac;
        jac << std::cos(dl), -e * std::sin(dl), -r, x,
               std::sin(dl), e * std::cos(dl), -x, -r,
               0, 0, v, 0,
               0, 0, 0, -v;
        u -= jac.partialPivLu().solve(f);
    }

    Equilibrium eq;
    eq.v_d0 = v;
    eq.v_q0 = 0.0;
    eq.i_d0 = u(2);
    eq.i_q0 = u(3);
    eq.e_d0 = u(0) * std::cos(u(1));
    eq.e_q0 = u(0) * std::sin(u(1));
    eq.iterations = it;
    switch (structure) {
        case StructureId::vcGFM:
            eq.theta0 = std::atan2(eq.e_q0, eq.e_d0);
            eq.emf0 = std::hypot(eq.e_d0, eq.e_q0);
            break;
        case StructureId::ccGFM: {
            // Quasi-static emf v + jX i.
            const double ed = v - x * eq.i_q0;
            const double eqv = x * eq.i_d0;
            eq.theta0 = std::atan2(eqv, ed);
            eq.emf0 = std::hypot(ed, eqv);
            break;
        }
        default:
            eq.theta0 = 0.0;
            eq.emf0 = std::hypot(eq.e_d0, eq.e_q0);
    }
    return eq;
}

double steady_state_residual(const CircuitParams& circuit, const OperatingPoint& op,
                             const Equilibrium& eq) {
    const cplx v(eq.v_d0, eq.v_q0), i(eq.i_d0, eq.i_q0), e(eq.e_d0, eq.e_q0);
    const cplx z(circuit.r_filter, circuit.l_filter);
    const cplx s = v * std::conj(i);
    const double circuit_res = std::abs(e - v - z * i);
    return std::sqrt(circuit_res * circuit_res + std::pow(s.real() - op.p, 2) +
                     std::pow(s.imag() - op.q, 2) + std::pow(std::abs(v) - op.v, 2));
}

std::vector<std::string> state_inventory(StructureId structure) {
    const auto model = build_model_unchecked(
        structure,
        mode_of(structure) == Mode::GFL ? ControlParams{GflControlParams{}}
                                        : ControlParams{GfmControlParams{}},
        CircuitParams::with_scr(15.0), OperatingPoint{});
    return model.state_labels;
}

StateSpaceModel build_model_unchecked(StructureId structure, const ControlParams& params,
                                      const CircuitParams& circuit, const OperatingPoint& op,
                                      const PerUnitBase& base) {
    base.validate();
    validate_family(structure, params);
    const Equilibrium eq = steady_state(structure, circuit, op);
    const double wb = base.omega_base();
    StateSpaceModel m = std::holds_alternative<GflControlParams>(params)
        ? build_gfl(structure, std::get<GflControlParams>(params), circuit, eq, op, wb)
        : build_gfm(structure, std::get<GfmControlParams>(params), circuit, eq, wb);
    m.circuit = circuit;
    return m;
}

StateSpaceModel build_model(StructureId structure, const ControlParams& params,
                            const CircuitParams& circuit, const OperatingPoint& op,
                            const PerUnitBase& base) {
    StateSpaceModel model = build_model_unchecked(structure, params, circuit, op, base);
    const double re = max_real_eigenvalue(model);
    if (!(re < 0.0)) {
        throw Error(ErrorCode::UnstableLinearization,
                    std::string(to_string(structure)) + " linearization has eigenvalue with real part " +
                        std::to_string(re));
    }
    return model;
}

Eigen::MatrixXd interconnected_state_matrix(const StateSpaceModel& m, bool pade) {
    auto [a, bv] = pade ? pade_augmented(m) : std::pair{m.a, m.b};
    const int na = static_cast<int>(a.rows());
    // Generator-convention filter current i = S x, and v = (R_g + j X_g) i + (L_g / wb) di/dt.
    Eigen::MatrixXd sel = Eigen::MatrixXd::Zero(2, na);
    sel.leftCols(m.order()) = -m.c;
    const CircuitParams& g = m.circuit;
    const double lw = g.l_grid / m.omega_base;
    const Eigen::Matrix2d zg = g.r_grid * Eigen::Matrix2d::Identity() + g.l_grid * kJ;
    const Eigen::Matrix2d lhs = Eigen::Matrix2d::Identity() - lw * sel * bv;
    const Eigen::MatrixXd k = lhs.inverse() * (zg * sel + lw * sel * a);
    return a + bv * k;
}

double max_real_eigenvalue(const StateSpaceModel& model) {
    const auto re_max = [](const Eigen::MatrixXd& a) {
        Eigen::EigenSolver<Eigen::MatrixXd> es(a, false);
        if (es.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
        return es.eigenvalues().real().maxCoeff();
    };
    return std::max(re_max(interconnected_state_matrix(model, false)),
                    re_max(interconnected_state_matrix(model, true)));
}

StateSpaceModel filter_only_model(const CircuitParams& circuit, const PerUnitBase& base) {
    circuit.validate();
    const Context cx{base.omega_base(), circuit.r_filter, circuit.l_filter,
                     Vec2(1, 0), Vec2(0, 0), Vec2(1, 0), 0.0};
    Builder b(cx.wb);
    const int si = b.add2("i");
    b.freeze();
    add_filter(b, cx, si);
    StateSpaceModel m = b.finish(StructureId::vcGFM, b.state2(si), b.zero2(), 0.0);
    m.circuit = circuit;
    return m;
}

cplx delay_factor(double omega, double delay) { return std::polar(1.0, -omega * delay); }

ComplexMatrix2 admittance_at(const StateSpaceModel& m, double omega) {
    if (!(omega >= 0.0)) throw Error(ErrorCode::InvalidArgument, "omega must be non-negative");
    const cplx s(0.0, omega);
    const cplx k = delay_factor(omega, m.delay);
    const Eigen::MatrixXcd bw = m.b_w.cast<cplx>();
    Eigen::MatrixXcd res = -m.a_open.cast<cplx>() - k * bw * m.c_w.cast<cplx>();
    res.diagonal().array() += s;
    const Eigen::MatrixXcd rhs = m.b_v.cast<cplx>() + k * bw * m.d_wv.cast<cplx>();
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(res);
    if (!(lu.rcond() > 1e-14)) {
        throw Error(ErrorCode::SingularResolvent, "resolvent singular at omega " + std::to_string(omega));
    }
    const Eigen::Matrix2cd y = m.c.cast<cplx>() * lu.solve(rhs) + m.d.cast<cplx>();
    return {y(0, 0), y(0, 1), y(1, 0), y(1, 1)};
}

ComplexMatrix2 filter_admittance(const CircuitParams& circuit, double omega,
                                 const PerUnitBase& base) {
    const cplx zs(circuit.r_filter, omega * circuit.l_filter / base.omega_base());
    const double x = circuit.l_filter;
    // Z = [[zs, -x], [x, zs]]
    const cplx det = zs * zs + x * x;
    return {zs / det, x / det, -x / det, zs / det};
}

AdmittanceSpectrum sweep_admittance(const StateSpaceModel& model,
                                    std::span<const double> frequencies_hz) {
    AdmittanceSpectrum out;
    out.frequencies.reserve(frequencies_hz.size());
    out.entries.reserve(frequencies_hz.size());
    double prev = 0.0;
    for (std::size_t k = 0; k < frequencies_hz.size(); ++k) {
        const double f = frequencies_hz[k];
        if (!(f > 0.0) || (k > 0 && !(f > prev))) {
            throw Error(ErrorCode::InvalidArgument, "frequency grid must be positive and strictly increasing");
        }
        prev = f;
        out.frequencies.push_back(f);
        out.entries.push_back(admittance_at(model, 2.0 * std::numbers::pi * f));
    }
    return out;
}

std::vector<double> log_grid(double f_lo, double f_hi, int points) {
    if (points < 2 || !(f_lo > 0.0) || !(f_hi > f_lo)) {
        throw Error(ErrorCode::InvalidArgument, "log grid needs >= 2 points and 0 < f_lo < f_hi");
    }
    std::vector<double> g(points);
    const double a = std::log10(f_lo), b = std::log10(f_hi);
    for (int k = 0; k < points; ++k) {
        g[k] = std::pow(10.0, a + (b - a) * k / (points - 1));
    }
    g.front() = f_lo;
    g.back() = f_hi;
    return g;
}

}  // namespace admitlab
