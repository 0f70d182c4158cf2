#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "admitlab/error.hpp"
#include "admitlab/smallsignal.hpp"
#include "oracles.hpp"

using namespace admitlab;
using Catch::Approx;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

GflControlParams mid_gfl() {
    GflControlParams p;
    p.omega_p = 22.0;
    p.omega_q = 22.0;
    p.omega_v = 9.0;
    p.omega_n = 775.0;
    p.omega_cc = 2100.0;
    p.delay = 125e-6;
    return p;
}

GfmControlParams table1_gfm() {
    GfmControlParams p;
    p.inertia_h = 2.6;
    p.damping_xi = 2.0;
    p.delay = 100e-6;
    return p;
}

ControlParams params_for(StructureId s) {
    if (mode_of(s) == Mode::GFM) return table1_gfm();
    return mid_gfl();
}

double rel_diff(cplx a, cplx b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST_CASE("zero power leaves no filter drop", "[smallsignal][steady]") {
    for (StructureId s : kAllStructures) {
        const Equilibrium eq = steady_state(s, CircuitParams::table1(), {0.0, 0.0, 1.0});
        CHECK(std::abs(eq.i_d0) < 1e-12);
        CHECK(std::abs(eq.i_q0) < 1e-12);
        CHECK(eq.e_d0 == Approx(eq.v_d0).margin(1e-12));
        CHECK(eq.e_q0 == Approx(eq.v_q0).margin(1e-12));
    }
}

TEST_CASE("unit active power at unit voltage gives unit d current", "[smallsignal][steady]") {
    const Equilibrium eq = steady_state(StructureId::pqGFL, CircuitParams::table1(), {1.0, 0.0, 1.0});
    CHECK(eq.v_q0 == 0.0);
    CHECK(eq.i_d0 == Approx(1.0).margin(1e-12));
    CHECK(eq.i_q0 == Approx(0.0).margin(1e-12));
}

TEST_CASE("steady state satisfies the nonlinear equations", "[smallsignal][steady]") {
    const CircuitParams c = CircuitParams::table1();
    const OperatingPoint op{0.5, 0.2, 1.0};
    const Equilibrium eq = steady_state(StructureId::vcGFM, c, op);
    CHECK(steady_state_residual(c, op, eq) < 1e-10);

    // Independent check: P + jQ = v i* with v = v_d (v_q = 0), and e = v + Z i.
    const cplx v(eq.v_d0, eq.v_q0), i(eq.i_d0, eq.i_q0), e(eq.e_d0, eq.e_q0);
    const cplx s = v * std::conj(i);
    CHECK(s.real() == Approx(op.p).margin(1e-10));
    CHECK(s.imag() == Approx(op.q).margin(1e-10));
    CHECK(std::abs(v) == Approx(op.v).margin(1e-10));
    const cplx z(c.r_filter, c.l_filter);
    CHECK(std::abs(e - (v + z * i)) < 1e-10);
}

TEST_CASE("model order matches the documented inventory", "[smallsignal][model]") {
    const StateSpaceModel m =
        build_model(StructureId::pqGFL, mid_gfl(), CircuitParams::with_scr(15.0), {0.5, 0.0, 1.0});
    CHECK(m.order() == static_cast<int>(state_inventory(StructureId::pqGFL).size()));
    CHECK(m.state_labels == state_inventory(StructureId::pqGFL));
    CHECK(max_real_eigenvalue(m) < 0.0);

    for (StructureId s : kAllStructures) {
        const StateSpaceModel ms =
            build_model(s, params_for(s), CircuitParams::with_scr(15.0), {0.5, 0.0, 1.0});
        CHECK(ms.order() == static_cast<int>(state_inventory(s).size()));
        CHECK(ms.a.rows() == ms.order());
        CHECK(ms.b.rows() == ms.order());
        CHECK(ms.b.cols() == 2);
        CHECK(ms.c.rows() == 2);
    }
}

TEST_CASE("vcGFM with H 2.6 and xi 2 is stable on the validation circuit", "[smallsignal][model]") {
    const StateSpaceModel m =
        build_model(StructureId::vcGFM, table1_gfm(), CircuitParams::table1(), {1.0, 0.0, 1.0});
    const Eigen::VectorXcd ev = interconnected_state_matrix(m, true).eigenvalues();
    CHECK(ev.real().maxCoeff() < 0.0);
}

TEST_CASE("model construction is deterministic", "[smallsignal][model]") {
    for (StructureId s : kAllStructures) {
        const auto a = build_model(s, params_for(s), CircuitParams::with_scr(15.0), {0.3, 0.1, 1.02});
        const auto b = build_model(s, params_for(s), CircuitParams::with_scr(15.0), {0.3, 0.1, 1.02});
        CHECK(a.a == b.a);
        CHECK(a.b == b.b);
        CHECK(a.c == b.c);
        CHECK(a.d == b.d);
        CHECK(a.a_open == b.a_open);
        CHECK(a.c_w == b.c_w);
    }
}

TEST_CASE("out-of-range parameters are rejected", "[smallsignal][model]") {
    GfmControlParams p = table1_gfm();
    p.inertia_h = -1.0;
    CHECK_THROWS_AS(build_model(StructureId::vcGFM, p, CircuitParams::table1(), {1.0, 0.0, 1.0}), Error);
    // A GFL parameter set does not fit a GFM structure.
    CHECK_THROWS_AS(build_model(StructureId::vcGFM, mid_gfl(), CircuitParams::table1(), {1.0, 0.0, 1.0}),
                    Error);
}

TEST_CASE("filter admittance is the inverse of the dq impedance", "[smallsignal][filter]") {
    const CircuitParams c = CircuitParams::table1();
    const double wb = PerUnitBase{}.omega_base();
    for (double f : {0.0, 1.0, 50.0, 333.0, 5000.0}) {
        const ComplexMatrix2 y = filter_admittance(c, kTwoPi * f);
        const ComplexMatrix2 ref = oracle::rl_admittance(c.r_filter, c.l_filter, kTwoPi * f / wb);
        CHECK(std::abs(y.dd - ref.dd) < 1e-9 * std::abs(ref.dd) + 1e-12);
        CHECK(std::abs(y.dq - ref.dq) < 1e-9 * std::abs(ref.dq) + 1e-12);
        CHECK(std::abs(y.qd - ref.qd) < 1e-9 * std::abs(ref.qd) + 1e-12);
        CHECK(std::abs(y.qq - ref.qq) < 1e-9 * std::abs(ref.qq) + 1e-12);
    }
}

TEST_CASE("filter admittance at DC, hand inversion", "[smallsignal][filter]") {
    CircuitParams c;
    c.r_filter = 0.005;
    c.l_filter = 0.15;
    const ComplexMatrix2 y = filter_admittance(c, 0.0);
    // det = 0.005^2 + 0.15^2 = 0.022525
    CHECK(y.dd.real() == Approx(0.005 / 0.022525).epsilon(1e-12));
    CHECK(y.dd.real() == Approx(0.22198).epsilon(1e-4));
    CHECK(y.qd.real() == Approx(-0.15 / 0.022525).epsilon(1e-12));
    CHECK(y.qd.real() == Approx(-6.6594).epsilon(1e-4));
    CHECK(y.dq.real() == Approx(0.15 / 0.022525).epsilon(1e-12));
}

TEST_CASE("filter admittance rolls off inductively", "[smallsignal][filter]") {
    const CircuitParams c = CircuitParams::table1();
    const double wb = PerUnitBase{}.omega_base();
    double prev = std::abs(filter_admittance(c, kTwoPi * 200.0).dd), last_f = 200.0;
    for (double f = 300.0; f <= 1e5; f *= 1.5) {
        const double cur = std::abs(filter_admittance(c, kTwoPi * f).dd);
        CHECK(cur < prev);
        prev = cur;
        last_f = f;
    }
    const double w = kTwoPi * last_f;
    CHECK(prev == Approx(1.0 / (w / wb * c.l_filter)).epsilon(0.02));
}

TEST_CASE("uncontrolled model reproduces the filter admittance", "[smallsignal][filter]") {
    const CircuitParams c = CircuitParams::table1();
    const StateSpaceModel m = filter_only_model(c);
    for (double f : {1.0, 10.0, 100.0, 1000.0}) {
        const ComplexMatrix2 y = admittance_at(m, kTwoPi * f);
        const ComplexMatrix2 ref = filter_admittance(c, kTwoPi * f);
        CHECK(rel_diff(y.dd, ref.dd) < 1e-9);
        CHECK(rel_diff(y.qd, ref.qd) < 1e-9);
    }
}

TEST_CASE("every structure approaches the filter at 10 kHz", "[smallsignal][filter]") {
    const CircuitParams c = CircuitParams::with_scr(15.0);
    const double w = kTwoPi * 1e4;
    for (StructureId s : kAllStructures) {
        const StateSpaceModel m = build_model(s, params_for(s), c, {0.5, 0.0, 1.0});
        const ComplexMatrix2 y = admittance_at(m, w);
        const ComplexMatrix2 f = filter_admittance(c, w);
        INFO(to_string(s));
        CHECK(std::abs(std::abs(y.dd) / std::abs(f.dd) - 1.0) < 0.05);
        // qq carries the PLL term as well, which is still a few percent at 10 kHz for GFL
        const ComplexMatrix2 y100 = admittance_at(m, 10.0 * w), f100 = filter_admittance(c, 10.0 * w);
        CHECK(std::abs(std::abs(y100.dd) / std::abs(f100.dd) - 1.0) < 0.01);
        CHECK(std::abs(std::abs(y100.qq) / std::abs(f100.qq) - 1.0) < 0.01);
    }
}

TEST_CASE("delay factor is a unit phasor", "[smallsignal]") {
    const cplx z = delay_factor(kTwoPi * 1000.0, 125e-6);
    CHECK(std::abs(z) == Approx(1.0).epsilon(1e-15));
    CHECK(std::arg(z) == Approx(-kTwoPi * 1000.0 * 125e-6).epsilon(1e-12));
}

TEST_CASE("delay enters the admittance as e^{-s tau}", "[smallsignal]") {
    // Evaluate the split form by hand at one frequency and compare.
    const StateSpaceModel m =
        build_model(StructureId::vcGFM, table1_gfm(), CircuitParams::table1(), {1.0, 0.0, 1.0});
    const double w = kTwoPi * 300.0;
    const cplx s(0.0, w);
    const cplx dl = std::exp(cplx(0.0, -w * m.delay));
    const Eigen::Index n = m.order();
    const Eigen::MatrixXcd lhs = s * Eigen::MatrixXcd::Identity(n, n) - m.a_open.cast<cplx>() -
                                 dl * (m.b_w.cast<cplx>() * m.c_w.cast<cplx>());
    const Eigen::MatrixXcd rhs = m.b_v.cast<cplx>() + dl * (m.b_w.cast<cplx>() * m.d_wv.cast<cplx>());
    const Eigen::MatrixXcd y = m.c.cast<cplx>() * lhs.partialPivLu().solve(rhs) + m.d.cast<cplx>();
    const ComplexMatrix2 got = admittance_at(m, w);
    CHECK(std::abs(got.dd - y(0, 0)) < 1e-9 * std::abs(y(0, 0)));
    CHECK(std::abs(got.dq - y(0, 1)) < 1e-9 * std::abs(y(0, 1)));
    CHECK(std::abs(got.qd - y(1, 0)) < 1e-9 * std::abs(y(1, 0)));
    CHECK(std::abs(got.qq - y(1, 1)) < 1e-9 * std::abs(y(1, 1)));
}

TEST_CASE("sweep agrees with pointwise evaluation", "[smallsignal][sweep]") {
    const StateSpaceModel m =
        build_model(StructureId::ccGFM, table1_gfm(), CircuitParams::with_scr(15.0), {0.5, 0.1, 1.0});
    const std::vector<double> one{37.0};
    const AdmittanceSpectrum s = sweep_admittance(m, one);
    REQUIRE(s.entries.size() == 1);
    const ComplexMatrix2 p = admittance_at(m, kTwoPi * 37.0);
    CHECK(s.entries[0].dd == p.dd);
    CHECK(s.entries[0].qq == p.qq);

    const auto grid = log_grid(1.0, 1000.0, 50);
    const AdmittanceSpectrum a = sweep_admittance(m, grid), b = sweep_admittance(m, grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        CHECK(a.entries[k].dd == b.entries[k].dd);
        CHECK(a.entries[k].qd == b.entries[k].qd);
    }
}

TEST_CASE("log grid includes both endpoints", "[smallsignal][sweep]") {
    const auto g = log_grid(1.0, 1000.0, 100);
    REQUIRE(g.size() == 100);
    CHECK(g.front() == 1.0);
    CHECK(g.back() == Approx(1000.0).epsilon(1e-14));
    CHECK(g[33] == Approx(std::pow(10.0, 33.0 * 3.0 / 99.0)).epsilon(1e-12));
    CHECK_THROWS_AS(log_grid(0.0, 10.0, 5), Error);
}

TEST_CASE("admittance is continuous in frequency", "[smallsignal][sweep]") {
    // Linear interpolation error shrinks by at least 2x when the grid spacing halves.
    const StateSpaceModel m =
        build_model(StructureId::vcGFM, table1_gfm(), CircuitParams::table1(), {1.0, 0.0, 1.0});
    auto interp_error = [&](double h) {
        double worst = 0.0;
        for (double f0 = 20.0; f0 < 200.0; f0 += 7.3) {
            const cplx y0 = admittance_at(m, kTwoPi * f0).dd, y1 = admittance_at(m, kTwoPi * (f0 + h)).dd;
            const cplx mid = admittance_at(m, kTwoPi * (f0 + 0.5 * h)).dd;
            worst = std::max(worst, std::abs(mid - 0.5 * (y0 + y1)));
        }
        return worst;
    };
    const double e1 = interp_error(2.0), e2 = interp_error(1.0);
    CHECK(e1 / e2 >= 2.0);
}
