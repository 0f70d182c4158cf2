#include "admitlab/measurement.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <fftw3.h>

#include "admitlab/error.hpp"
#include "admitlab/parallel.hpp"

namespace admitlab {

namespace {

const Eigen::Matrix2d kJ = (Eigen::Matrix2d() << 0.0, -1.0, 1.0, 0.0).finished();

std::mutex& fftw_planner_mutex() {
    static std::mutex mu;
    return mu;
}

// Converter + PCC shunt + grid: state [x | v | i_g], input [u_inj | w]. The injection is a
// current into the PCC node or a voltage in series between the PCC and the grid branch.
struct NetworkSystem {
    Eigen::MatrixXd a;
    Eigen::MatrixXd b;
    Eigen::MatrixXd cmd;  // modulation command row block over the state
    int n_conv = 0;
};

NetworkSystem network_system(const StateSpaceModel& m, const MeasurementNetwork& net,
                             InjectionMode mode = InjectionMode::ShuntCurrent) {
    if (!(net.c_pcc > 0.0) || !(net.g_pcc >= 0.0)) {
        throw Error(ErrorCode::ParamOutOfRange, "PCC shunt needs c_pcc > 0 and g_pcc >= 0");
    }
    const int n = m.order();
    const int nz = n + 4;
    const double wb = m.omega_base;
    const CircuitParams& g = m.circuit;
    const Eigen::Matrix2d id = Eigen::Matrix2d::Identity();

    NetworkSystem s;
    s.n_conv = n;
    s.a = Eigen::MatrixXd::Zero(nz, nz);
    s.b = Eigen::MatrixXd::Zero(nz, 4);
    s.a.topLeftCorner(n, n) = m.a_open;
    s.a.block(0, n, n, 2) = m.b_v;
    s.b.block(0, 2, n, 2) = m.b_w;
    // (C/wb) dv/dt = i_gen + i_inj - i_g - G v - j C v, with i_gen = -c x.
    const double kc = wb / net.c_pcc;
    s.a.block(n, 0, 2, n) = -kc * m.c;
    s.a.block(n, n, 2, 2) = -kc * (net.g_pcc * id + net.c_pcc * kJ);
    s.a.block(n, n + 2, 2, 2) = -kc * id;
    // (L_g/wb) di_g/dt = v - u_series - R_g i_g - j L_g i_g
    const double kl = wb / g.l_grid;
    s.a.block(n + 2, n, 2, 2) = kl * id;
    s.a.block(n + 2, n + 2, 2, 2) = -kl * (g.r_grid * id + g.l_grid * kJ);
    if (mode == InjectionMode::ShuntCurrent) {
        s.b.block(n, 0, 2, 2) = kc * id;
    } else {
        s.b.block(n + 2, 0, 2, 2) = -kl * id;
    }
    s.cmd = Eigen::MatrixXd::Zero(2, nz);
    s.cmd.leftCols(n) = m.c_w;
    s.cmd.block(0, n, 2, 2) = m.d_wv;
    return s;
}

double slowest_decay_rate(const StateSpaceModel& m, const MeasurementNetwork& net) {
    const NetworkSystem s = network_system(m, net);
    const Eigen::MatrixXd closed = s.a + s.b.rightCols(2) * s.cmd;
    Eigen::EigenSolver<Eigen::MatrixXd> es(closed, false);
    return -es.eigenvalues().real().maxCoeff();
}

// Piecewise-cubic Lagrange interpolation on the four nearest support points.
std::optional<cplx> interpolate(const std::vector<double>& f, const std::vector<cplx>& y, double x) {
    const std::size_t n = f.size();
    if (n == 0) return std::nullopt;
    const double tol = 1e-9 * std::max(1.0, std::abs(x));
    const auto it = std::lower_bound(f.begin(), f.end(), x - tol);
    if (it != f.end() && std::abs(*it - x) <= tol) return y[static_cast<std::size_t>(it - f.begin())];
    if (n < 2 || x < f.front() || x > f.back()) return std::nullopt;
    const std::size_t hi = static_cast<std::size_t>(it - f.begin());
    if (n < 4) {
        const double t = (x - f[hi - 1]) / (f[hi] - f[hi - 1]);
        return (1.0 - t) * y[hi - 1] + t * y[hi];
    }
    const std::size_t lo = std::min(hi >= 2 ? hi - 2 : 0, n - 4);
    cplx acc{};
    for (std::size_t i = lo; i < lo + 4; ++i) {
        double w = 1.0;
        for (std::size_t j = lo; j < lo + 4; ++j) {
            if (j != i) w *= (x - f[j]) / (f[i] - f[j]);
        }
        acc += w * y[i];
    }
    return acc;
}

struct TransferSet {
    std::vector<double> f;
    std::vector<cplx> vd, vq, id, iq;
};

TransferSet normalize_by_injection(const RunSpectra& r) {
    const std::size_t n = r.injection.values.size();
    for (const Spectrum* s : {&r.v_d, &r.v_q, &r.i_d, &r.i_q}) {
        if (s->values.size() != n || s->frequencies != r.injection.frequencies) {
            throw Error(ErrorCode::LengthMismatch, "run spectra do not share frequency bins");
        }
    }
    double peak = 0.0;
    for (const cplx& u : r.injection.values) peak = std::max(peak, std::abs(u));
    TransferSet t;
    for (std::size_t k = 0; k < n; ++k) {
        const cplx u = r.injection.values[k];
        if (!(peak > 0.0) || std::abs(u) <= 1e-9 * peak) continue;
        t.f.push_back(r.injection.frequencies[k]);
        t.vd.push_back(r.v_d.values[k] / u);
        t.vq.push_back(r.v_q.values[k] / u);
        t.id.push_back(r.i_d.values[k] / u);
        t.iq.push_back(r.i_q.values[k] / u);
    }
    return t;
}

struct RunSetup {
    TimeSeries inj;
    std::size_t period_samples;
    std::size_t discard_samples;
    int periods_discarded;
    double f_max;
};

RunSetup make_run(const PrbsConfig& prbs, double dt_nominal, int periods_discard,
                  int periods_average, double settle_time, double f_max) {
    const TimeSeries chips = generate_prbs(prbs);
    const int steps = std::max(1, static_cast<int>(std::lround(chips.dt / dt_nominal)));
    const double period_time = chips.dt * static_cast<double>(chips.values.size());
    int discard = periods_discard;
    if (settle_time > 0.0) {
        const double capped = std::min(settle_time, 60.0);
        discard = std::max(discard, static_cast<int>(std::ceil(capped / period_time)));
    }
    RunSetup r;
    r.inj = hold_and_repeat(chips, steps, discard + periods_average);
    r.period_samples = chips.values.size() * static_cast<std::size_t>(steps);
    r.discard_samples = r.period_samples * static_cast<std::size_t>(discard);
    r.periods_discarded = discard;
    r.f_max = f_max;
    return r;
}

RunSpectra run_axis(const StateSpaceModel& model, const RunSetup& setup, int axis,
                    int periods_average, const MeasurementNetwork& net, InjectionMode mode) {
    TimeSeries zero{setup.inj.dt, std::vector<double>(setup.inj.values.size(), 0.0)};
    const TimeSeries& inj_d = axis == 0 ? setup.inj : zero;
    const TimeSeries& inj_q = axis == 0 ? zero : setup.inj;
    const ResponseSeries resp = simulate_response(model, inj_d, inj_q, setup.discard_samples, net, mode);

    TimeSeries inj_tail{setup.inj.dt,
                        std::vector<double>(setup.inj.values.begin() +
                                                static_cast<std::ptrdiff_t>(setup.discard_samples),
                                            setup.inj.values.end())};
    const auto spec = [&](const TimeSeries& ts) {
        return estimate_spectrum(ts, setup.period_samples, periods_average, setup.f_max);
    };
    return {spec(inj_tail), spec(resp.v_d), spec(resp.v_q), spec(resp.i_d), spec(resp.i_q)};
}

}  // namespace

void MeasurementConfig::validate() const {
    if (!(dt > 0.0)) throw Error(ErrorCode::ParamOutOfRange, "dt must be > 0");
    if (periods_average < 1 || periods_discard < 0) {
        throw Error(ErrorCode::ParamOutOfRange, "periods_average >= 1 and periods_discard >= 0 required");
    }
    if (!(slow_dt_factor >= 1.0) || !(f_min_hz > 0.0) || !(f_max_hz > f_min_hz) ||
        !(stitch_hz >= f_min_hz)) {
        throw Error(ErrorCode::ParamOutOfRange, "inconsistent measurement band settings");
    }
}

ResponseSeries simulate_response(const StateSpaceModel& model, const TimeSeries& inj_d,
                                 const TimeSeries& inj_q, std::size_t discard_samples,
                                 const MeasurementNetwork& network, InjectionMode mode) {
    if (inj_d.values.size() != inj_q.values.size() || inj_d.dt != inj_q.dt) {
        throw Error(ErrorCode::LengthMismatch, "injection series must share dt and length");
    }
    const std::size_t total = inj_d.values.size();
    if (discard_samples >= total) {
        throw Error(ErrorCode::LengthMismatch, "nothing left after discarding the lead-in");
    }
    const double h = inj_d.dt;
    // delay = (m + alpha) h; the delayed command is interpolated linearly between steps
    const double steps_exact = model.delay / h;
    const long m_steps = static_cast<long>(std::floor(steps_exact + 1e-9));
    double alpha = steps_exact - static_cast<double>(m_steps);
    if (alpha < 1e-9) alpha = 0.0;

    NetworkSystem sys = network_system(model, network, mode);
    const int nz = static_cast<int>(sys.a.rows());
    const int n = sys.n_conv;
    Eigen::MatrixXd a = sys.a;
    Eigen::MatrixXd b = sys.b;
    if (m_steps == 0) {
        // the undelayed share of the command is algebraic in the current state
        a += (1.0 - alpha) * b.rightCols(2) * sys.cmd;
    }
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(nz, nz);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lhs(id - 0.5 * h * a);
    const Eigen::MatrixXd step = lhs.solve(id + 0.5 * h * a);
    const Eigen::MatrixXd drive = lhs.solve(0.5 * h * b);

    const std::size_t keep = total - discard_samples;
    ResponseSeries out;
    for (TimeSeries* ts : {&out.v_d, &out.v_q, &out.i_d, &out.i_q}) {
        ts->dt = h;
        ts->values.resize(keep);
    }

    // cmd history, zero before the start: w_{k+1} = (1 - alpha) cmd_{k+1-m} + alpha cmd_{k-m}
    const std::size_t ring_len = static_cast<std::size_t>(m_steps + 1);
    std::vector<Eigen::Vector2d> ring(ring_len, Eigen::Vector2d::Zero());

    Eigen::VectorXd z = Eigen::VectorXd::Zero(nz);
    Eigen::VectorXd z_next(nz);
    Eigen::Vector4d u_prev = Eigen::Vector4d::Zero();
    u_prev(0) = inj_d.values[0];
    u_prev(1) = inj_q.values[0];
    const Eigen::Matrix2Xd c_out = model.c;

    for (std::size_t k = 0; k < total; ++k) {
        if (k >= discard_samples) {
            const std::size_t j = k - discard_samples;
            const Eigen::Vector2d i_load = c_out * z.head(n);
            out.v_d.values[j] = z(n);
            out.v_q.values[j] = z(n + 1);
            out.i_d.values[j] = i_load(0);
            out.i_q.values[j] = i_load(1);
        }
        if (k + 1 == total) break;

        Eigen::Vector4d u_next;
        u_next(0) = inj_d.values[k + 1];
        u_next(1) = inj_q.values[k + 1];
        if (m_steps > 0 || alpha > 0.0) {
            // slot k % L holds cmd_k; with L = m + 1 the oldest entry cmd_{k-m} is still present
            ring[k % ring_len] = sys.cmd * z;
            const auto past = [&](long idx) -> Eigen::Vector2d {
                return idx >= 0 ? ring[static_cast<std::size_t>(idx) % ring_len] : Eigen::Vector2d::Zero();
            };
            const long newest = static_cast<long>(k + 1) - m_steps;
            Eigen::Vector2d w = alpha * past(newest - 1);
            if (m_steps > 0) w += (1.0 - alpha) * past(newest);
            u_next(2) = w(0);
            u_next(3) = w(1);
        } else {
            u_next(2) = u_next(3) = 0.0;
        }
        z_next.noalias() = step * z;
        z_next.noalias() += drive * (u_prev + u_next);
        z.swap(z_next);
        u_prev = u_next;

        if ((k & 1023) == 0 && !(z.cwiseAbs().maxCoeff() <= 1e6)) {
            std::ostringstream msg;
            msg << "state exceeded 1e6 pu at t = " << static_cast<double>(k + 1) * h << " s";
            throw Error(ErrorCode::NumericalBlowup, msg.str());
        }
    }
    if (!(z.cwiseAbs().maxCoeff() <= 1e6)) {
        throw Error(ErrorCode::NumericalBlowup, "state exceeded 1e6 pu");
    }
    return out;
}

Spectrum estimate_spectrum(const TimeSeries& ts, std::size_t period_samples, int periods_average,
                           double f_max_hz) {
    if (period_samples == 0 || periods_average < 1) {
        throw Error(ErrorCode::InvalidArgument, "period_samples and periods_average must be positive");
    }
    const std::size_t need = period_samples * static_cast<std::size_t>(periods_average);
    if (ts.values.size() < need) {
        throw Error(ErrorCode::LengthMismatch, "series holds " + std::to_string(ts.values.size()) +
                                                   " samples, need " + std::to_string(need));
    }
    const std::size_t n = period_samples;
    double* in = fftw_alloc_real(n);
    fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
    fftw_plan plan;
    {
        std::lock_guard lock(fftw_planner_mutex());
        plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
    }
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int p = 0; p < periods_average; ++p) acc += ts.values[p * n + i];
        in[i] = acc / periods_average;
    }
    fftw_execute(plan);

    Spectrum s;
    const double df = 1.0 / (static_cast<double>(n) * ts.dt);
    const std::size_t kmax = std::min(n / 2, static_cast<std::size_t>(std::floor(f_max_hz / df + 1e-9)));
    for (std::size_t k = 0; k <= kmax; ++k) {
        const double scale = (k == 0 || 2 * k == n ? 1.0 : 2.0) / static_cast<double>(n);
        s.frequencies.push_back(static_cast<double>(k) * df);
        s.values.emplace_back(scale * out[k][0], scale * out[k][1]);
    }
    {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(plan);
    }
    fftw_free(in);
    fftw_free(out);
    return s;
}

AdmittanceSolution solve_admittance(const RunSpectra& run_d, const RunSpectra& run_q,
                                    std::span<const double> grid_hz, double max_condition) {
    const TransferSet td = normalize_by_injection(run_d);
    const TransferSet tq = normalize_by_injection(run_q);
    AdmittanceSolution sol;
    for (double f : grid_hz) {
        const auto vd1 = interpolate(td.f, td.vd, f), vq1 = interpolate(td.f, td.vq, f);
        const auto id1 = interpolate(td.f, td.id, f), iq1 = interpolate(td.f, td.iq, f);
        const auto vd2 = interpolate(tq.f, tq.vd, f), vq2 = interpolate(tq.f, tq.vq, f);
        const auto id2 = interpolate(tq.f, tq.id, f), iq2 = interpolate(tq.f, tq.iq, f);
        if (!vd1 || !vd2) {
            sol.dropped.push_back(f);
            continue;
        }
        Eigen::Matrix2cd v, i;
        v << *vd1, *vd2, *vq1, *vq2;
        i << *id1, *id2, *iq1, *iq2;
        const Eigen::JacobiSVD<Eigen::Matrix2cd> svd(v);
        const double smax = svd.singularValues()(0), smin = svd.singularValues()(1);
        if (!(smin > 0.0) || !(smax / smin < max_condition)) {
            sol.dropped.push_back(f);
            continue;
        }
        const Eigen::Matrix2cd y = i * v.inverse();
        sol.spectrum.frequencies.push_back(f);
        sol.spectrum.entries.push_back({y(0, 0), y(0, 1), y(1, 0), y(1, 1)});
    }
    if (sol.spectrum.frequencies.empty() && !grid_hz.empty()) {
        std::ostringstream msg;
        msg << "voltage excitation matrix ill-conditioned at all " << sol.dropped.size() << " bins:";
        for (std::size_t k = 0; k < sol.dropped.size() && k < 20; ++k) msg << ' ' << sol.dropped[k];
        if (sol.dropped.size() > 20) msg << " ...";
        throw Error(ErrorCode::IllConditioned, msg.str());
    }
    return sol;
}

std::vector<double> native_measurement_grid(const MeasurementConfig& cfg) {
    std::vector<double> grid;
    const double slow_df = cfg.prbs_slow.chip_rate() / static_cast<double>(cfg.prbs_slow.period());
    for (long k = 1;; ++k) {
        const double f = static_cast<double>(k) * slow_df;
        if (f >= cfg.stitch_hz || f > cfg.f_max_hz) break;
        if (f >= cfg.f_min_hz) grid.push_back(f);
    }
    const double fast_lo = std::max(cfg.stitch_hz, cfg.mid_stitch_hz);
    const double mid_df = cfg.prbs_mid.chip_rate() / static_cast<double>(cfg.prbs_mid.period());
    for (long k = 1;; ++k) {
        const double f = static_cast<double>(k) * mid_df;
        if (f >= fast_lo || f > cfg.f_max_hz) break;
        if (f >= cfg.stitch_hz && f >= cfg.f_min_hz) grid.push_back(f);
    }
    const double fast_df = cfg.prbs_d.chip_rate() / static_cast<double>(cfg.prbs_d.period());
    for (long k = 1;; ++k) {
        const double f = static_cast<double>(k) * fast_df;
        if (f > cfg.f_max_hz * (1.0 + 1e-12)) break;
        if (f >= fast_lo && f >= cfg.f_min_hz) grid.push_back(f);
    }
    return grid;
}

MeasurementResult measure_admittance(const StateSpaceModel& model, const MeasurementConfig& cfg,
                                     std::span<const double> grid_hz, int threads) {
    cfg.validate();
    std::vector<double> grid(grid_hz.begin(), grid_hz.end());
    if (grid.empty()) grid = native_measurement_grid(cfg);

    const double fast_lo = std::max(cfg.stitch_hz, cfg.mid_stitch_hz);
    std::vector<double> slow_grid, mid_grid, fast_grid;
    for (double f : grid) (f < cfg.stitch_hz ? slow_grid : f < fast_lo ? mid_grid : fast_grid).push_back(f);

    double settle = 0.0;
    if (cfg.auto_settle) {
        const double sigma = slowest_decay_rate(model, cfg.network);
        if (sigma > 0.0) settle = 14.0 / sigma;
    }
    const double slow_dt = cfg.dt * cfg.slow_dt_factor;
    const double slow_fmax = std::max(cfg.stitch_hz, cfg.prbs_slow.chip_rate());
    const double mid_fmax = std::max(fast_lo, cfg.prbs_mid.chip_rate());

    struct Job {
        const PrbsConfig* prbs;
        double dt;
        int axis;
        double f_max;
        bool needed;
    };
    const std::vector<Job> jobs = {
        {&cfg.prbs_d, cfg.dt, 0, cfg.f_max_hz, !fast_grid.empty()},
        {&cfg.prbs_q, cfg.dt, 1, cfg.f_max_hz, !fast_grid.empty()},
        {&cfg.prbs_slow, slow_dt, 0, slow_fmax, !slow_grid.empty()},
        {&cfg.prbs_slow, slow_dt, 1, slow_fmax, !slow_grid.empty()},
        {&cfg.prbs_mid, slow_dt, 0, mid_fmax, !mid_grid.empty()},
        {&cfg.prbs_mid, slow_dt, 1, mid_fmax, !mid_grid.empty()},
    };
    std::vector<RunSpectra> spectra(jobs.size());
    std::vector<int> discarded(jobs.size(), 0);
    parallel_for(jobs.size(), threads, [&](std::size_t j) {
        if (!jobs[j].needed) return;
        const RunSetup setup = make_run(*jobs[j].prbs, jobs[j].dt, cfg.periods_discard,
                                        cfg.periods_average, settle, jobs[j].f_max);
        discarded[j] = setup.periods_discarded;
        spectra[j] = run_axis(model, setup, jobs[j].axis, cfg.periods_average, cfg.network, cfg.injection_mode);
    });

    MeasurementResult res;
    res.fast_periods_discarded = discarded[0];
    res.slow_periods_discarded = discarded[2];
    res.mid_periods_discarded = discarded[4];
    std::vector<std::pair<double, ComplexMatrix2>> merged;
    const auto absorb = [&](const RunSpectra& d, const RunSpectra& q, const std::vector<double>& g) {
        if (g.empty()) return;
        AdmittanceSolution sol;
        try {
            sol = solve_admittance(d, q, g);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::IllConditioned) throw;
            res.dropped.insert(res.dropped.end(), g.begin(), g.end());
            return;
        }
        for (std::size_t k = 0; k < sol.spectrum.frequencies.size(); ++k) {
            merged.emplace_back(sol.spectrum.frequencies[k], sol.spectrum.entries[k]);
        }
        res.dropped.insert(res.dropped.end(), sol.dropped.begin(), sol.dropped.end());
    };
    absorb(spectra[2], spectra[3], slow_grid);
    absorb(spectra[4], spectra[5], mid_grid);
    absorb(spectra[0], spectra[1], fast_grid);
    if (merged.empty()) {
        throw Error(ErrorCode::IllConditioned,
                    "no measurement bin has a well-conditioned voltage excitation");
    }
    std::sort(merged.begin(), merged.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    std::sort(res.dropped.begin(), res.dropped.end());
    for (auto& [f, y] : merged) {
        res.measured.frequencies.push_back(f);
        res.measured.entries.push_back(y);
    }
    return res;
}

double wrap_deg(double deg) {
    double r = std::fmod(deg, 360.0);
    if (r <= -180.0) r += 360.0;
    if (r > 180.0) r -= 360.0;
    return r;
}

ValidationReport validate_measurement(const AdmittanceSpectrum& measured,
                                      const StateSpaceModel& model, double band_lo_hz,
                                      double band_hi_hz, double tol_mag_db, double tol_phase_deg) {
    ValidationReport rep{band_lo_hz, band_hi_hz, tol_mag_db, tol_phase_deg, {}, 0.0, false};
    const auto mag_err = [](cplx m, cplx a) { return 20.0 * std::log10(std::abs(m) / std::abs(a)); };
    const auto ph_err = [](cplx m, cplx a) { return wrap_deg(std::arg(m / a) * 180.0 / std::numbers::pi); };
    std::size_t passed = 0;
    for (std::size_t k = 0; k < measured.frequencies.size(); ++k) {
        const double f = measured.frequencies[k];
        if (f < band_lo_hz || f > band_hi_hz) continue;
        const ComplexMatrix2 ref = admittance_at(model, 2.0 * std::numbers::pi * f);
        const ComplexMatrix2& m = measured.entries[k];
        BinCheck c{f, mag_err(m.dd, ref.dd), ph_err(m.dd, ref.dd), mag_err(m.qq, ref.qq),
                   ph_err(m.qq, ref.qq), false};
        c.pass = std::abs(c.dd_mag_err_db) <= tol_mag_db && std::abs(c.qq_mag_err_db) <= tol_mag_db &&
                 std::abs(c.dd_phase_err_deg) <= tol_phase_deg &&
                 std::abs(c.qq_phase_err_deg) <= tol_phase_deg;
        passed += c.pass ? 1 : 0;
        rep.bins.push_back(c);
    }
    if (!rep.bins.empty()) {
        rep.pass_fraction = static_cast<double>(passed) / static_cast<double>(rep.bins.size());
        rep.passed = rep.pass_fraction >= 0.95;
    }
    return rep;
}

}  // namespace admitlab
